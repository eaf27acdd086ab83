"""1-D layer kernels with hand-written backward passes.

Arrays are timestep-major: a single tensor is ``(T, C)`` and a batch is
``(B, T, C)``.  Every kernel accepts any number of leading batch axes; the
last two axes are always time and channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, EmptyBatch, IndexOutOfRange, ShapeMismatch

BN_EPS = 1e-3
BN_MOMENTUM = 0.99

LAYER_KINDS = ("conv1d", "batchnorm", "maxpool", "upsample", "dense", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_channels: int = 0
    filters: int = 0
    kernel_size: int = 0
    stride: int = 1
    factor: int = 0
    activation: str | None = None
    has_bias: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.has_bias:
            raise ValueError("biased layers are not supported")

    def output_shape(self, length: int, channels: int) -> tuple[int, int]:
        if self.kind in ("conv1d", "dense"):
            if channels != self.in_channels:
                raise ChannelMismatch(f"{self.name}: expected {self.in_channels} channels, got {channels}")
            return -(-length // self.stride), self.filters
        if self.kind == "maxpool":
            return -(-length // self.factor), channels
        if self.kind == "upsample":
            return length * self.factor, channels
        return length, channels


def count_parameters(spec: LayerSpec) -> int:
    """Parameter count in the convention of the reference architecture table.

    Batch norm counts four tensors per channel (gamma, beta and the two
    running statistics); only gamma and beta are optimized.
    """
    if spec.kind == "conv1d":
        return spec.kernel_size * spec.in_channels * spec.filters
    if spec.kind == "dense":
        return spec.in_channels * spec.filters
    if spec.kind == "batchnorm":
        return 4 * spec.filters
    return 0


def trainable_parameters(spec: LayerSpec) -> int:
    if spec.kind == "batchnorm":
        return 2 * spec.filters
    return count_parameters(spec)


# ---------------------------------------------------------------------------
# convolution


def _im2col(x, k):
    pad = k // 2
    T = x.shape[-2]
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(x, widths)
    return np.concatenate([xp[..., j:j + T, :] for j in range(k)], axis=-1)


def conv1d_forward(x, kernels):
    """Same-padded, stride-1 cross-correlation.

    ``kernels`` has shape ``(k, in_ch, out_ch)`` with odd ``k``;
    ``out[t, o] = sum_{j,c} x[t + j - k//2, c] * kernels[j, c, o]``.
    """
    k, cin, cout = kernels.shape
    if k % 2 == 0:
        raise ValueError("kernel length must be odd")
    if x.shape[-1] != cin:
        raise ChannelMismatch(f"input has {x.shape[-1]} channels, kernels expect {cin}")
    cols = _im2col(x, k)
    return cols @ kernels.reshape(k * cin, cout)


def conv1d_backward(x, kernels, upstream):
    k, cin, cout = kernels.shape
    T = x.shape[-2]
    if upstream.shape != x.shape[:-1] + (cout,):
        raise ShapeMismatch(f"upstream {upstream.shape} does not match output {x.shape[:-1] + (cout,)}")
    cols = _im2col(x, k)
    grad_k = (cols.reshape(-1, k * cin).T @ upstream.reshape(-1, cout)).reshape(k, cin, cout)
    gcols = upstream @ kernels.reshape(k * cin, cout).T
    pad = k // 2
    gpad = np.zeros(x.shape[:-2] + (T + 2 * pad, cin), dtype=gcols.dtype)
    for j in range(k):
        gpad[..., j:j + T, :] += gcols[..., j * cin:(j + 1) * cin]
    return gpad[..., pad:pad + T, :], grad_k


# ---------------------------------------------------------------------------
# batch normalization


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train",
                      eps=BN_EPS, momentum=BN_MOMENTUM):
    """Normalize per channel over every axis except the last.

    In train mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place; infer mode reads them only.
    Returns ``(y, cache)``; the cache feeds :func:`batchnorm_backward`.
    """
    if isinstance(x, (list, tuple)):
        if not x:
            raise EmptyBatch("batch norm needs at least one tensor")
        x = np.stack(x)
    if x.size == 0:
        raise EmptyBatch("batch norm needs at least one element")
    if eps <= 0:
        raise ValueError("eps must be positive")
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    elif mode == "infer":
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std, gamma, mode)


def batchnorm_backward(cache, upstream):
    xhat, inv_std, gamma, mode = cache
    if upstream.shape != xhat.shape:
        raise ShapeMismatch(f"upstream {upstream.shape} does not match {xhat.shape}")
    axes = tuple(range(upstream.ndim - 1))
    grad_beta = upstream.sum(axis=axes)
    grad_gamma = (upstream * xhat).sum(axis=axes)
    dxhat = upstream * gamma
    if mode == "infer":
        return dxhat * inv_std, grad_gamma, grad_beta
    m = xhat.size // xhat.shape[-1]
    grad_x = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# pooling / upsampling


def maxpool1d_forward(x, size=2, stride=2):
    """Non-overlapping max pool in ceil mode; ties go to the lower index.

    Returns ``(y, argmax)`` where ``argmax`` holds input time indices.
    """
    if size != 2 or stride != 2:
        raise ValueError("only size=stride=2 pooling is supported")
    T = x.shape[-2]
    if T % 2:
        fill = np.full(x.shape[:-2] + (1, x.shape[-1]), -np.inf, dtype=x.dtype)
        x = np.concatenate([x, fill], axis=-2)
    win = x.reshape(x.shape[:-2] + (x.shape[-2] // 2, 2, x.shape[-1]))
    arg = np.argmax(win, axis=-2)
    y = np.take_along_axis(win, arg[..., None, :], axis=-2)[..., 0, :]
    argmax = arg + 2 * np.arange(win.shape[-3])[:, None]
    return y, argmax


def maxpool1d_backward(argmax, upstream, input_length):
    if upstream.shape != argmax.shape:
        raise ShapeMismatch(f"upstream {upstream.shape} does not match argmax {argmax.shape}")
    if argmax.size and (argmax.min() < 0 or argmax.max() >= input_length):
        raise IndexOutOfRange(f"argmax index outside [0, {input_length})")
    grad = np.zeros(upstream.shape[:-2] + (input_length, upstream.shape[-1]), dtype=upstream.dtype)
    np.put_along_axis(grad, argmax, upstream, axis=-2)
    return grad


def upsample1d_forward(x, factor=2):
    return np.repeat(x, factor, axis=-2)


def upsample1d_backward(upstream, factor=2):
    T = upstream.shape[-2]
    if T % factor:
        raise ShapeMismatch(f"upstream length {T} not a multiple of {factor}")
    return upstream.reshape(upstream.shape[:-2] + (T // factor, factor, upstream.shape[-1])).sum(axis=-2)


# ---------------------------------------------------------------------------
# dense and activations


def dense_forward(x, weights):
    """Per-timestep linear map, no bias: ``out[t, o] = sum_c x[t, c] * W[c, o]``."""
    if x.shape[-1] != weights.shape[0]:
        raise ChannelMismatch(f"input has {x.shape[-1]} channels, weights expect {weights.shape[0]}")
    return x @ weights


def dense_backward(x, weights, upstream):
    if upstream.shape != x.shape[:-1] + (weights.shape[1],):
        raise ShapeMismatch("upstream does not match dense output")
    grad_w = x.reshape(-1, x.shape[-1]).T @ upstream.reshape(-1, weights.shape[1])
    return upstream @ weights.T, grad_w


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    return upstream * (x > 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, upstream):
    """Gradient through a sigmoid given its *output* ``y``."""
    return upstream * y * (1.0 - y)


def activation(x, kind):
    x = np.asarray(x, dtype=np.result_type(x, np.float32))
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(x, upstream, kind):
    """Elementwise derivative gate; ``x`` is the activation *input*."""
    if kind == "relu":
        return relu_backward(x, upstream)
    if kind == "sigmoid":
        return sigmoid_backward(sigmoid(np.asarray(x, dtype=np.result_type(x, np.float32))), upstream)
    raise ValueError(f"unknown activation {kind!r}")
