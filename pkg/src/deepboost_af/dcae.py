"""19-layer 1-D convolutional autoencoder: assembly, training, features, I/O."""

from __future__ import annotations

import copy
import json
import logging
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import neural as nn
from .errors import (
    CorruptFile,
    EmptyTrainingSet,
    LengthMismatch,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .neural import LayerSpec
from .preprocess import SIGNAL_LENGTH

logger = logging.getLogger(__name__)

N_ENCODER_LAYERS = 9
FEATURE_MODES = ("reduce", "flatten")


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def architecture(wide: int = 32, narrow: int = 16) -> list[LayerSpec]:
    """Layer table of the autoencoder; ``wide``/``narrow`` default to 32/16."""
    conv = lambda i, cin, cout: LayerSpec("conv1d", f"conv1d_{i}", cin, cout, 3, 1, activation="relu")
    bn = lambda i, c: LayerSpec("batchnorm", f"bn_{i}", c, c)
    pool = lambda i: LayerSpec("maxpool", f"maxpool_{i}", factor=2, stride=2)
    up = lambda i: LayerSpec("upsample", f"upsampling_{i}", factor=2)
    return [
        conv(1, 1, wide), bn(1, wide), pool(1),
        conv(2, wide, narrow), bn(2, narrow), pool(2),
        conv(3, narrow, narrow), bn(3, narrow), pool(3),
        conv(4, narrow, narrow), bn(4, narrow), up(1),
        conv(5, narrow, narrow), bn(5, narrow), up(2),
        conv(6, narrow, wide), bn(6, wide), up(3),
        LayerSpec("dense", "dense", wide, 1, activation="sigmoid"),
    ]


@dataclass
class DcaeModel:
    layers: list[LayerSpec]
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    rng_seed: int = 0
    input_length: int = SIGNAL_LENGTH
    adam: AdamState = field(default_factory=AdamState)

    def shapes(self, length=None):
        """Output (length, channels) per layer, input row first."""
        T, C = (length or self.input_length), 1
        rows = [(T, C)]
        for spec in self.layers:
            T, C = spec.output_shape(T, C)
            rows.append((T, C))
        return rows

    def parameter_counts(self):
        return [nn.count_parameters(s) for s in self.layers]

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self):
        return copy.deepcopy(self)


def build_dcae(seed: int = 0, input_length: int = SIGNAL_LENGTH, wide: int = 32,
               narrow: int = 16, dtype=np.float32) -> DcaeModel:
    """Assemble the autoencoder with Glorot-uniform kernels drawn from ``seed``."""
    if input_length % 8:
        raise ShapeMismatch(f"input length {input_length} must be divisible by 8")
    rng = np.random.default_rng(seed)
    layers = architecture(wide, narrow)
    params, buffers = {}, {}
    for spec in layers:
        if spec.kind == "conv1d":
            k = spec.kernel_size
            limit = np.sqrt(6.0 / (k * spec.in_channels + k * spec.filters))
            shape = (k, spec.in_channels, spec.filters)
            params[f"{spec.name}/kernel"] = rng.uniform(-limit, limit, shape).astype(dtype)
        elif spec.kind == "dense":
            limit = np.sqrt(6.0 / (spec.in_channels + spec.filters))
            shape = (spec.in_channels, spec.filters)
            params[f"{spec.name}/kernel"] = rng.uniform(-limit, limit, shape).astype(dtype)
        elif spec.kind == "batchnorm":
            c = spec.filters
            params[f"{spec.name}/gamma"] = np.ones(c, dtype)
            params[f"{spec.name}/beta"] = np.zeros(c, dtype)
            buffers[f"{spec.name}/moving_mean"] = np.zeros(c, dtype)
            buffers[f"{spec.name}/moving_variance"] = np.ones(c, dtype)
    return DcaeModel(layers, params, buffers, seed, input_length)


# ---------------------------------------------------------------------------
# forward / backward


def _as_batch(model, signals):
    x = np.asarray(signals, dtype=model.dtype)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3 or x.shape[1:] != (model.input_length, 1):
        raise ShapeMismatch(f"expected signals of shape (n, {model.input_length}), got {np.shape(signals)}")
    return x


def _run(model, x, mode, stop=None, keep=False):
    caches = []
    shapes = []
    for spec in model.layers[:stop]:
        cache = None
        if spec.kind == "conv1d":
            z = nn.conv1d_forward(x, model.params[f"{spec.name}/kernel"])
            cache = (x, z)
            x = nn.relu(z)
        elif spec.kind == "batchnorm":
            p, b = model.params, model.buffers
            x, cache = nn.batchnorm_forward(
                x, p[f"{spec.name}/gamma"], p[f"{spec.name}/beta"],
                b[f"{spec.name}/moving_mean"], b[f"{spec.name}/moving_variance"], mode)
        elif spec.kind == "maxpool":
            length = x.shape[-2]
            x, arg = nn.maxpool1d_forward(x)
            cache = (arg, length)
        elif spec.kind == "upsample":
            x = nn.upsample1d_forward(x, spec.factor)
        elif spec.kind == "dense":
            cache = x
            x = nn.sigmoid(nn.dense_forward(x, model.params[f"{spec.name}/kernel"]))
            cache = (cache, x)
        if keep:
            caches.append(cache)
        shapes.append(x.shape[-2:])
    return x, caches, shapes


def forward(model: DcaeModel, signals, mode: str = "infer"):
    """Reconstruct a batch of signals, returning an ``(n, T)`` array."""
    x = _as_batch(model, signals)
    y, _, _ = _run(model, x, mode)
    return y[..., 0]


def layer_shapes(model: DcaeModel, signals):
    x = _as_batch(model, signals)
    _, _, shapes = _run(model, x, "infer")
    return [tuple(x.shape[-2:])] + [tuple(s) for s in shapes]


def loss_and_grads(model: DcaeModel, signals, mode: str = "train"):
    """Mean squared reconstruction error of a batch and its parameter gradients."""
    x = _as_batch(model, signals)
    y, caches, _ = _run(model, x, mode, keep=True)
    diff = y - x
    loss = float(np.mean(diff * diff, dtype=np.float64))
    g = (2.0 / diff.size) * diff
    grads = {}
    for spec, cache in zip(reversed(model.layers), reversed(caches)):
        if spec.kind == "dense":
            inp, out = cache
            g = nn.sigmoid_backward(out, g)
            g, grads[f"{spec.name}/kernel"] = nn.dense_backward(inp, model.params[f"{spec.name}/kernel"], g)
        elif spec.kind == "upsample":
            g = nn.upsample1d_backward(g, spec.factor)
        elif spec.kind == "batchnorm":
            g, grads[f"{spec.name}/gamma"], grads[f"{spec.name}/beta"] = nn.batchnorm_backward(cache, g)
        elif spec.kind == "maxpool":
            arg, length = cache
            g = nn.maxpool1d_backward(arg, g, length)
        elif spec.kind == "conv1d":
            inp, z = cache
            g = nn.relu_backward(z, g)
            g, grads[f"{spec.name}/kernel"] = nn.conv1d_backward(inp, model.params[f"{spec.name}/kernel"], g)
    return loss, grads


def mse(u, u_hat) -> float:
    u = np.asarray(u, dtype=np.float64)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u.shape != u_hat.shape:
        raise LengthMismatch(f"lengths differ: {u.shape} vs {u_hat.shape}")
    if u.size == 0:
        raise LengthMismatch("empty input")
    d = u - u_hat
    return float(np.mean(d * d))


# ---------------------------------------------------------------------------
# optimisation


def adam_step(params: dict, grads: dict, state: AdamState, config: OptimizerConfig) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for name, g in grads.items():
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= (config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)).astype(p.dtype)
    return state


def train_dcae(model: DcaeModel, signals, config: OptimizerConfig, seed: int = 0):
    """Train a copy of ``model``; returns ``(trained_model, per_epoch_mean_mse)``."""
    x = np.asarray(signals)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyTrainingSet("train_dcae needs at least one signal")
    model = model.copy()
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    log = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, x[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, b, loss)
            adam_step(model.params, grads, model.adam, config)
            total += loss * len(idx)
        log.append(total / n)
        logger.info("epoch %d mse %.6f", epoch, log[-1])
    return model, log


# ---------------------------------------------------------------------------
# features


def encode_features(model: DcaeModel, signals, mode: str = "reduce", chunk: int = 64) -> np.ndarray:
    """Bottleneck features in inference mode.

    ``reduce`` averages the bottleneck channels per position (one value per
    position); ``flatten`` keeps every (position, channel) value, time-major.
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    x = _as_batch(model, signals)
    out = []
    for start in range(0, x.shape[0], chunk):
        z, _, _ = _run(model, x[start:start + chunk], "infer", stop=N_ENCODER_LAYERS)
        out.append(z.mean(axis=-1) if mode == "reduce" else z.reshape(z.shape[0], -1))
    feats = np.concatenate(out)
    return feats[0] if np.ndim(signals) == 1 else feats


def feature_length(model: DcaeModel, mode: str = "reduce") -> int:
    T, C = model.shapes()[N_ENCODER_LAYERS]
    return T if mode == "reduce" else T * C


# ---------------------------------------------------------------------------
# serialization

MODEL_MAGIC = b"DCAE"
MODEL_VERSION = 1


def _tensors(model):
    yield from (("param", k, v) for k, v in model.params.items())
    yield from (("buffer", k, v) for k, v in model.buffers.items())
    yield from (("adam_m", k, v) for k, v in model.adam.m.items())
    yield from (("adam_v", k, v) for k, v in model.adam.v.items())


def save_model(model: DcaeModel, path) -> None:
    table, payload = [], []
    for role, name, arr in _tensors(model):
        arr = np.ascontiguousarray(arr)
        code = {np.dtype("float32"): "f4", np.dtype("float64"): "f8"}[arr.dtype]
        table.append({"role": role, "name": name, "shape": list(arr.shape), "dtype": code})
        payload.append(arr.astype("<" + code).tobytes())
    header = {
        "layers": [asdict(s) for s in model.layers],
        "tensors": table,
        "rng_seed": model.rng_seed,
        "input_length": model.input_length,
        "adam_step": model.adam.step,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(hbytes)) + hbytes + b"".join(payload)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_model(path) -> DcaeModel:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:4] != MODEL_MAGIC:
        raise CorruptFile(f"{path}: not a DCAE model file")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile(f"{path}: checksum mismatch")
    version, hlen = struct.unpack_from("<II", body, 4)
    if version != MODEL_VERSION:
        raise VersionMismatch(f"model version {version}, expected {MODEL_VERSION}")
    header = json.loads(body[12:12 + hlen].decode("utf-8"))
    off = 12 + hlen
    groups = {"param": {}, "buffer": {}, "adam_m": {}, "adam_v": {}}
    for t in header["tensors"]:
        dt = np.dtype("<" + t["dtype"])
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype=dt, count=count, offset=off).reshape(t["shape"])
        groups[t["role"]][t["name"]] = arr.astype(dt.newbyteorder("="))
        off += count * dt.itemsize
    if off != len(body):
        raise CorruptFile(f"{path}: payload size mismatch")
    layers = [LayerSpec(**d) for d in header["layers"]]
    adam = AdamState(header["adam_step"], groups["adam_m"], groups["adam_v"])
    return DcaeModel(layers, groups["param"], groups["buffer"], header["rng_seed"],
                     header["input_length"], adam)


def write_loss_log(log, path) -> None:
    lines = ["epoch,mean_mse"] + [f"{i},{v!r}" for i, v in enumerate(log, start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
