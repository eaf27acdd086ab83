"""Reading ECG recordings (MAT level 5 / CSV), label files and the binary cache.

The MAT reader covers exactly what the PhysioNet 2017 challenge files use:
uncompressed level-5 files holding one numeric matrix.  Anything else is
rejected with a typed error instead of being guessed at.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadHeader,
    CorruptFile,
    DuplicateId,
    EmptyRecord,
    MissingLabel,
    NotANumber,
    Truncated,
    UnknownTag,
    UnsupportedElement,
    VersionMismatch,
)
from .preprocess import SIGNAL_LENGTH, to_signal

CLASS_TAGS = ("N", "A", "O", "~")
DEFAULT_SAMPLE_RATE = 300

# MAT data types
MI_INT8, MI_UINT8, MI_INT16, MI_UINT16 = 1, 2, 3, 4
MI_INT32, MI_UINT32, MI_SINGLE, MI_DOUBLE = 5, 6, 7, 9
MI_INT64, MI_UINT64, MI_MATRIX, MI_COMPRESSED = 12, 13, 14, 15

_NUMERIC_DTYPES = {
    MI_INT8: "i1",
    MI_UINT8: "u1",
    MI_INT16: "i2",
    MI_UINT16: "u2",
    MI_INT32: "i4",
    MI_UINT32: "u4",
    MI_SINGLE: "f4",
    MI_DOUBLE: "f8",
    MI_INT64: "i8",
    MI_UINT64: "u8",
}
# mxCELL_CLASS .. mxOBJECT_CLASS, mxCHAR, mxSPARSE: not numeric arrays
_NON_NUMERIC_CLASSES = {1: "cell", 2: "struct", 3: "object", 4: "char", 5: "sparse"}


@dataclass
class RawRecord:
    id: str
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size == 0:
            raise EmptyRecord(f"record {self.id} has no samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")


@dataclass
class LabelIndex:
    entries: dict[str, str]
    positive_class: frozenset[str] = frozenset({"A"})

    def __post_init__(self):
        self.positive_class = frozenset(self.positive_class)
        bad = self.positive_class - set(CLASS_TAGS)
        if bad:
            raise UnknownTag(f"unknown positive class tag(s): {sorted(bad)}")
        if not self.positive_class or self.positive_class == set(CLASS_TAGS):
            raise ValueError("positive_class must be a non-empty proper subset of N, A, O, ~")

    def label_bit(self, record_id: str) -> int:
        return int(self.entries[record_id] in self.positive_class)

    def __len__(self):
        return len(self.entries)


@dataclass
class CacheRecord:
    id: str
    label: int
    signal: np.ndarray  # float32, SIGNAL_LENGTH
    split: int  # 0 train, 1 test


@dataclass
class DatasetCache:
    records: list[CacheRecord]
    split_seed: int
    manifest: dict = field(default_factory=dict)

    def split(self, which: str) -> list[CacheRecord]:
        flag = {"train": 0, "test": 1}[which]
        return [r for r in self.records if r.split == flag]

    def signals(self, which: str | None = None) -> np.ndarray:
        recs = self.records if which is None else self.split(which)
        if not recs:
            return np.zeros((0, SIGNAL_LENGTH), dtype=np.float32)
        return np.stack([r.signal for r in recs])


# ---------------------------------------------------------------------------
# MAT level 5


class _Reader:
    def __init__(self, buf: bytes, order: str):
        self.buf = buf
        self.order = order

    def u32(self, off):
        return struct.unpack_from(self.order + "I", self.buf, off)[0]

    def tag(self, off, end):
        """Return (type, nbytes, data_offset, next_offset) for the element at off."""
        if off + 8 > end:
            raise Truncated(f"element tag at byte {off} runs past end of data")
        first = self.u32(off)
        if first >> 16:
            # small data element: type and size packed into 4 bytes, data in the next 4
            return first & 0xFFFF, first >> 16, off + 4, off + 8
        nbytes = self.u32(off + 4)
        data = off + 8
        if data + nbytes > end:
            raise Truncated(
                f"element at byte {off} declares {nbytes} bytes, {end - data} remain"
            )
        return first, nbytes, data, data + nbytes + (-nbytes % 8)


def parse_mat_record(data: bytes, id: str) -> RawRecord:
    """Parse an uncompressed level-5 MAT file and return its first numeric matrix."""
    if len(data) < 128:
        raise BadHeader("file shorter than the 128-byte MAT header")
    endian = data[126:128]
    if endian == b"IM":
        order = "<"
    elif endian == b"MI":
        order = ">"
    else:
        raise BadHeader(f"bad endian indicator {endian!r}")
    version = struct.unpack_from(order + "H", data, 124)[0]
    if version != 0x0100:
        raise BadHeader(f"unsupported MAT version 0x{version:04x}")

    rd = _Reader(data, order)
    end = len(data)
    off = 128
    while off < end:
        mtype, nbytes, start, nxt = rd.tag(off, end)
        if mtype == MI_COMPRESSED:
            raise UnsupportedElement(mtype, "compressed element")
        if mtype != MI_MATRIX:
            raise UnsupportedElement(mtype, "expected a matrix element")
        samples = _parse_matrix(rd, start, start + nbytes)
        if samples is not None:
            return RawRecord(id=id, samples=samples)
        off = nxt
    raise EmptyRecord(f"{id}: no numeric matrix in file")


def _parse_matrix(rd: _Reader, off: int, end: int):
    # array flags
    ftype, fbytes, fdata, off = rd.tag(off, end)
    if ftype != MI_UINT32 or fbytes < 8:
        raise CorruptFile("matrix is missing its array-flags sub-element")
    flags = rd.u32(fdata)
    mx_class = flags & 0xFF
    is_complex = bool(flags & 0x0800)
    if mx_class in _NON_NUMERIC_CLASSES:
        raise UnsupportedElement(MI_MATRIX, f"{_NON_NUMERIC_CLASSES[mx_class]} array")
    if is_complex:
        raise UnsupportedElement(MI_MATRIX, "complex array")

    dtype_, dbytes, ddata, off = rd.tag(off, end)
    if dtype_ != MI_INT32:
        raise CorruptFile("matrix is missing its dimensions sub-element")
    dims = np.frombuffer(rd.buf, dtype=rd.order + "i4", count=dbytes // 4, offset=ddata)
    dims = tuple(int(d) for d in dims)

    _ntype, _nbytes, _ndata, off = rd.tag(off, end)  # array name; not needed

    rtype, rbytes, rdata, off = rd.tag(off, end)
    if rtype not in _NUMERIC_DTYPES:
        raise UnsupportedElement(rtype, "non-numeric data sub-element")
    dt = np.dtype(rd.order + _NUMERIC_DTYPES[rtype])
    count = rbytes // dt.itemsize
    values = np.frombuffer(rd.buf, dtype=dt, count=count, offset=rdata).astype(np.float64)
    if int(np.prod(dims)) != count:
        raise CorruptFile(f"dimensions {dims} disagree with {count} stored values")
    if count == 0:
        return None
    # stored column-major; flatten row-major
    return values.reshape(dims, order="F").ravel(order="C")


# ---------------------------------------------------------------------------
# CSV / labels


def parse_csv_record(text: str, id: str) -> RawRecord:
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        for tok in line.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise NotANumber(lineno, tok) from None
    if not values:
        raise EmptyRecord(f"{id}: no samples")
    return RawRecord(id=id, samples=np.array(values))


def load_labels(text: str, positive_class=frozenset({"A"})) -> LabelIndex:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise UnknownTag(f"line {lineno}: expected 'id,tag', got {line!r}")
        rid, tag = parts
        if tag not in CLASS_TAGS:
            raise UnknownTag(f"line {lineno}: unknown class tag {tag!r}")
        if rid in entries:
            raise DuplicateId(f"line {lineno}: duplicate record id {rid!r}")
        entries[rid] = tag
    return LabelIndex(entries=entries, positive_class=positive_class)


def read_record_file(path) -> RawRecord:
    path = Path(path)
    if path.suffix.lower() == ".mat":
        return parse_mat_record(path.read_bytes(), path.stem)
    return parse_csv_record(path.read_text(encoding="utf-8"), path.stem)


# ---------------------------------------------------------------------------
# split + cache


def stratified_split(labels, seed: int, test_fraction: float = 0.3) -> np.ndarray:
    """Return a 0/1 test-flag array stratified by label.

    The test total is round(test_fraction * n); per-class quotas are assigned
    by largest remainder, so each class is within one record of its exact share.
    """
    labels = np.asarray(labels)
    n = labels.size
    classes = np.unique(labels)
    total = int(round(test_fraction * n))
    counts = np.array([(labels == c).sum() for c in classes])
    quota = total * counts / n if n else counts * 0.0
    alloc = np.floor(quota).astype(int)
    order = np.argsort(-(quota - alloc), kind="stable")
    for i in order[: total - alloc.sum()]:
        alloc[i] += 1

    rng = np.random.default_rng(seed)
    flags = np.zeros(n, dtype=np.uint8)
    for c, k in zip(classes, alloc):
        idx = np.flatnonzero(labels == c)
        chosen = rng.permutation(idx)[:k]
        flags[chosen] = 1
    return flags


def build_cache(records, labels: LabelIndex, seed: int) -> DatasetCache:
    missing = [r.id for r in records if r.id not in labels.entries]
    if missing:
        raise MissingLabel(missing)
    records = sorted(records, key=lambda r: r.id)
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DuplicateId("duplicate record ids in input")
    bits = np.array([labels.label_bit(i) for i in ids], dtype=np.uint8)
    flags = stratified_split(bits, seed)
    out = []
    for rec, bit, flag in zip(records, bits, flags):
        sig = to_signal(rec.samples, SIGNAL_LENGTH, rec.id).astype(np.float32)
        out.append(CacheRecord(rec.id, int(bit), sig, int(flag)))
    return DatasetCache(out, seed, _manifest(out, seed, labels.positive_class))


def _manifest(records, seed, positive_class):
    counts = {"train": {"0": 0, "1": 0}, "test": {"0": 0, "1": 0}}
    for r in records:
        counts["test" if r.split else "train"][str(r.label)] += 1
    return {
        "counts": counts,
        "n_records": len(records),
        "positive_class": sorted(positive_class),
        "split_seed": seed,
        "test_ids": [r.id for r in records if r.split],
    }


CACHE_MAGIC = b"DBAF"
CACHE_VERSION = 1


def write_cache(cache: DatasetCache, path) -> None:
    parts = [CACHE_MAGIC, struct.pack("<II", CACHE_VERSION, len(cache.records))]
    for r in cache.records:
        rid = r.id.encode("utf-8")
        sig = np.asarray(r.signal, dtype="<f4")
        if sig.shape != (SIGNAL_LENGTH,):
            raise ValueError(f"record {r.id}: signal must have {SIGNAL_LENGTH} samples")
        parts += [struct.pack("<H", len(rid)), rid, struct.pack("<B", r.label),
                  sig.tobytes(), struct.pack("<B", r.split)]
    manifest = dict(cache.manifest, split_seed=cache.split_seed)
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(blob)), blob]
    Path(path).write_bytes(b"".join(parts))


def read_cache(path) -> DatasetCache:
    buf = Path(path).read_bytes()
    if buf[:4] != CACHE_MAGIC:
        raise CorruptFile(f"{path}: not a dataset cache")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != CACHE_VERSION:
            raise VersionMismatch(f"cache version {version}, expected {CACHE_VERSION}")
        off = 12
        records = []
        nbytes = 4 * SIGNAL_LENGTH
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            rid = buf[off:off + n].decode("utf-8")
            off += n
            (label,) = struct.unpack_from("<B", buf, off)
            off += 1
            if off + nbytes > len(buf):
                raise CorruptFile(f"{path}: truncated record {rid}")
            sig = np.frombuffer(buf, dtype="<f4", count=SIGNAL_LENGTH, offset=off).astype(np.float32)
            off += nbytes
            (split,) = struct.unpack_from("<B", buf, off)
            off += 1
            records.append(CacheRecord(rid, label, sig, split))
        (mlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + mlen != len(buf):
            raise CorruptFile(f"{path}: manifest length does not match file size")
        manifest = json.loads(buf[off:off + mlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    return DatasetCache(records, int(manifest.get("split_seed", 0)), manifest)


def write_mat_record(samples, name: str = "val", order: str = "<") -> bytes:
    """Serialize a 1 x N int16 row vector as an uncompressed level-5 MAT file."""
    data = np.asarray(samples, dtype=order + "i2").tobytes()
    n = len(samples)

    def element(mtype, payload):
        pad = -len(payload) % 8
        return struct.pack(order + "II", mtype, len(payload)) + payload + b"\0" * pad

    flags = element(MI_UINT32, struct.pack(order + "II", 10, 0))  # mxINT16_CLASS
    dims = element(MI_INT32, struct.pack(order + "ii", 1, n))
    nm = name.encode("ascii")
    if len(nm) <= 4:
        name_el = struct.pack(order + "HH", MI_INT8, len(nm)) + nm.ljust(4, b"\0")
    else:
        name_el = element(MI_INT8, nm)
    body = flags + dims + name_el + element(MI_INT16, data)
    text = b"MATLAB 5.0 MAT-file, written by deepboost_af".ljust(116, b" ")
    header = text + b"\0" * 8 + struct.pack(order + "H", 0x0100) + (b"IM" if order == "<" else b"MI")
    return header + struct.pack(order + "II", MI_MATRIX, len(body)) + body
