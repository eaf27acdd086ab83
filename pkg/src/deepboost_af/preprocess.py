"""Per-record min-max scaling and fitting to the fixed network input length."""

import logging

import numpy as np

from .errors import ConstantSignal

logger = logging.getLogger(__name__)

SIGNAL_LENGTH = 9000


def min_max_normalize(samples):
    """Scale ``samples`` linearly onto [0, 1].

    Raises ConstantSignal when max == min; callers decide what to do with
    flat records (see :func:`to_signal`).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    lo = x.min()
    hi = x.max()
    if hi == lo:
        raise ConstantSignal(f"constant signal (value {lo})")
    return (x - lo) / (hi - lo)


def fit_length(samples, target=SIGNAL_LENGTH):
    """Truncate to the first ``target`` samples or right-pad with zeros."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    if target <= 0:
        raise ValueError("target must be positive")
    if x.size >= target:
        return x[:target].copy()
    out = np.zeros(target, dtype=np.float64)
    out[: x.size] = x
    return out


def to_signal(samples, target=SIGNAL_LENGTH, record_id=None):
    """Normalize then length-fit; constant records become all zeros."""
    try:
        x = min_max_normalize(samples)
    except ConstantSignal:
        logger.warning("record %s is constant; using an all-zero signal", record_id)
        x = np.zeros(len(samples), dtype=np.float64)
    return fit_length(x, target)
