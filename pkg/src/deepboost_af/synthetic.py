"""Synthetic single-lead ECG-like records for smoke runs and tests.

Negative records are a regular spike train on a quiet baseline.  Positive
records get irregular beat spacing plus an injected fibrillatory
oscillation, which is the class-dependent signal the classifiers must find.
"""

from __future__ import annotations

import numpy as np

from .signal_io import RawRecord

FS = 300


def synthetic_ecg(positive: bool, rng: np.random.Generator, n: int = 9000, fs: int = FS,
                  oscillation_hz: float = 6.0, oscillation_amp: float = 0.6) -> np.ndarray:
    t = np.arange(n) / fs
    x = 0.02 * rng.standard_normal(n)
    x += 0.05 * np.sin(2 * np.pi * rng.uniform(0.15, 0.35) * t + rng.uniform(0, 2 * np.pi))
    rr = 60.0 / rng.uniform(60, 90)
    beat = rng.uniform(0, rr)
    while beat < t[-1]:
        x += 1.0 * np.exp(-0.5 * ((t - beat) / 0.012) ** 2)
        x -= 0.15 * np.exp(-0.5 * ((t - beat - 0.04) / 0.02) ** 2)
        if not positive:
            x += 0.12 * np.exp(-0.5 * ((t - beat + 0.16) / 0.03) ** 2)  # P wave
        x += 0.25 * np.exp(-0.5 * ((t - beat - 0.3) / 0.05) ** 2)  # T wave
        beat += rr * (rng.uniform(0.6, 1.4) if positive else rng.uniform(0.97, 1.03))
    if positive:
        f = oscillation_hz * rng.uniform(0.8, 1.2)
        x += oscillation_amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x


def make_records(n_records: int, seed: int, positive_fraction: float = 0.5,
                 n: int = 9000, **kwargs):
    """Return ``(records, labels_text)`` with tags ``A`` (positive) and ``N``."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_fraction * n_records))
    flags = np.array([1] * n_pos + [0] * (n_records - n_pos))
    rng.shuffle(flags)
    records, lines = [], []
    for i, pos in enumerate(flags):
        rid = f"S{i + 1:05d}"
        # int16 at 1 uV resolution keeps records shaped like the real corpus
        samples = np.round(synthetic_ecg(bool(pos), rng, n=n, **kwargs) * 1000).astype(np.int16)
        records.append(RawRecord(rid, samples.astype(np.float64), FS))
        lines.append(f"{rid},{'A' if pos else 'N'}")
    return records, "\n".join(lines) + "\n"
