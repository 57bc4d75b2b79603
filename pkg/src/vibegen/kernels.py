"""Forward and backward kernels for the layers of the 1-D GAN.

Tensors are plain numpy arrays shaped ``(batch, channels, length)``. Every
backward function *accumulates* parameter gradients into the ``ParamSet`` it is
given and returns the gradient with respect to the layer input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ConfigurationError,
    DegenerateStatisticsError,
    DimensionError,
    NonFiniteError,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LEAKY_SLOPE = 0.2
INIT_STD = 0.02

ACTIVATIONS = ("identity", "relu", "leaky_relu")


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x.ravel()))[0])
        raise NonFiniteError(f"{name} has a non-finite value at flat index {bad}")
    return x


def _check_3d(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 3:
        raise DimensionError(
            f"{name} must have 3 axes (batch, channels, length), got shape {x.shape}"
        )


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    transposed: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("channel counts must be >= 1")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigurationError(
                f"need kernel >= 1, stride >= 1, padding >= 0; got {self}"
            )

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        if self.transposed:
            return (self.in_channels, self.out_channels, self.kernel)
        return (self.out_channels, self.in_channels, self.kernel)

    def output_length(self, length: int) -> int:
        k, s, p = self.kernel, self.stride, self.padding
        if self.transposed:
            out = (length - 1) * s - 2 * p + k
        else:
            out = (length + 2 * p - k) // s + 1 if length + 2 * p >= k else 0
        if length < 1 or out < 1:
            raise ConfigurationError(
                f"{'transposed ' if self.transposed else ''}conv "
                f"(k={k}, s={s}, p={p}) gives non-positive output length for input length {length}"
            )
        return out


class ParamSet:
    """Learnable arrays of one layer, their gradient buffers and running buffers."""

    def __init__(self, values: dict[str, np.ndarray], buffers: dict[str, np.ndarray] | None = None):
        self.values = values
        self.grads = {name: np.zeros_like(v) for name, v in values.items()}
        self.buffers = buffers if buffers is not None else {}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def arrays(self):
        """Yield ``(name, array)`` for every stored array, parameters first."""
        yield from self.values.items()
        yield from self.buffers.items()

    @classmethod
    def for_conv(cls, spec: ConvSpec, dtype=np.float32, rng: np.random.Generator | None = None):
        if rng is None:
            weight = np.zeros(spec.weight_shape, dtype=dtype)
        else:
            weight = (rng.standard_normal(spec.weight_shape) * INIT_STD).astype(dtype)
        return cls({"weight": weight, "bias": np.zeros(spec.out_channels, dtype=dtype)})

    @classmethod
    def for_norm(cls, channels: int, dtype=np.float32, running: bool = False):
        values = {"gain": np.ones(channels, dtype=dtype), "shift": np.zeros(channels, dtype=dtype)}
        buffers = None
        if running:
            buffers = {
                "running_mean": np.zeros(channels, dtype=dtype),
                "running_var": np.ones(channels, dtype=dtype),
            }
        return cls(values, buffers)


# --------------------------------------------------------------------------
# convolution

def _windows(xp: np.ndarray, kernel: int, stride: int, count: int) -> np.ndarray:
    """(B, C, Lp) -> read-only view (B, C, count, kernel) of strided windows."""
    return sliding_window_view(xp, kernel, axis=2)[:, :, ::stride][:, :, :count]


def _pad(x: np.ndarray, left: int, right: int) -> np.ndarray:
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


def _scatter_taps(cols: np.ndarray, stride: int, full_length: int) -> np.ndarray:
    """Overlap-add of per-tap contributions.

    ``cols`` is (B, C, n, k); returns (B, C, full_length) where position
    ``i*stride + j`` receives ``cols[:, :, i, j]``.
    """
    b, c, n, k = cols.shape
    out = np.zeros((b, c, full_length), dtype=cols.dtype)
    span = stride * (n - 1) + 1
    for j in range(k):
        out[:, :, j:j + span:stride] += cols[:, :, :, j]
    return out


def _check_conv_input(x: np.ndarray, spec: ConvSpec, transposed: bool) -> None:
    _check_3d(x)
    if spec.transposed != transposed:
        kind = "conv_transpose1d" if transposed else "conv1d"
        raise ConfigurationError(f"{kind} called with spec.transposed={spec.transposed}")
    if x.shape[1] != spec.in_channels:
        raise DimensionError(
            f"channel axis: expected {spec.in_channels} input channels, got {x.shape[1]}"
        )


def _check_grad_shape(grad_out: np.ndarray, expected: tuple) -> None:
    if grad_out.shape != expected:
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match output shape {expected}")


def conv1d_forward(x: np.ndarray, spec: ConvSpec, params: ParamSet) -> np.ndarray:
    _check_conv_input(x, spec, transposed=False)
    b, c, length = x.shape
    t = spec.output_length(length)
    w = params["weight"]
    o, _, k = w.shape
    cols = _windows(_pad(x, spec.padding, spec.padding), k, spec.stride, t)
    cols2d = cols.transpose(0, 2, 1, 3).reshape(b * t, c * k)
    out = (cols2d @ w.reshape(o, c * k).T).reshape(b, t, o).transpose(0, 2, 1)
    return np.ascontiguousarray(out + params["bias"][None, :, None])


def conv1d_backward(x, grad_out, spec: ConvSpec, params: ParamSet, input_grad: bool = True):
    """Accumulate weight/bias gradients; return dL/dx (or None if ``input_grad`` is False)."""
    _check_conv_input(x, spec, transposed=False)
    b, c, length = x.shape
    t = spec.output_length(length)
    w = params["weight"]
    o, _, k = w.shape
    _check_grad_shape(grad_out, (b, o, t))
    p = spec.padding
    cols = _windows(_pad(x, p, p), k, spec.stride, t)
    cols2d = cols.transpose(0, 2, 1, 3).reshape(b * t, c * k)
    g2d = grad_out.transpose(0, 2, 1).reshape(b * t, o)
    params.grads["weight"] += (g2d.T @ cols2d).reshape(o, c, k)
    params.grads["bias"] += grad_out.sum(axis=(0, 2))
    if not input_grad:
        return None
    gcols = (g2d @ w.reshape(o, c * k)).reshape(b, t, c, k).transpose(0, 2, 1, 3)
    gxp = _scatter_taps(gcols, spec.stride, length + 2 * p)
    return np.ascontiguousarray(gxp[:, :, p:p + length])


def conv_transpose1d_forward(x: np.ndarray, spec: ConvSpec, params: ParamSet) -> np.ndarray:
    _check_conv_input(x, spec, transposed=True)
    b, c, length = x.shape
    lout = spec.output_length(length)
    w = params["weight"]
    _, o, k = w.shape
    x2d = x.transpose(0, 2, 1).reshape(b * length, c)
    cols = (x2d @ w.reshape(c, o * k)).reshape(b, length, o, k).transpose(0, 2, 1, 3)
    full = _scatter_taps(cols, spec.stride, (length - 1) * spec.stride + k)
    p = spec.padding
    return np.ascontiguousarray(full[:, :, p:p + lout] + params["bias"][None, :, None])


def conv_transpose1d_backward(x, grad_out, spec: ConvSpec, params: ParamSet, input_grad: bool = True):
    """Mirror of ``conv1d_backward``; dL/dx is a strided convolution of grad_out."""
    _check_conv_input(x, spec, transposed=True)
    b, c, length = x.shape
    lout = spec.output_length(length)
    w = params["weight"]
    _, o, k = w.shape
    _check_grad_shape(grad_out, (b, o, lout))
    p = spec.padding
    win = _windows(_pad(grad_out, p, p), k, spec.stride, length)
    win2d = win.transpose(0, 2, 1, 3).reshape(b * length, o * k)
    x2d = x.transpose(0, 2, 1).reshape(b * length, c)
    params.grads["weight"] += (x2d.T @ win2d).reshape(c, o, k)
    params.grads["bias"] += grad_out.sum(axis=(0, 2))
    if not input_grad:
        return None
    gx = (win2d @ w.reshape(c, o * k).T).reshape(b, length, c).transpose(0, 2, 1)
    return np.ascontiguousarray(gx)


# --------------------------------------------------------------------------
# normalization

def _norm_apply(x, mean, var, params: ParamSet):
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv_std
    y = xhat * params["gain"][None, :, None] + params["shift"][None, :, None]
    return y.astype(x.dtype, copy=False), xhat, inv_std


def batchnorm1d_forward(x: np.ndarray, params: ParamSet, train: bool = True):
    """Returns ``(y, cache)``. Train mode updates the running statistics in place."""
    _check_3d(x)
    b, c, length = x.shape
    if params["gain"].shape != (c,):
        raise DimensionError(f"channel axis: batch norm has {params['gain'].shape[0]} channels, input {c}")
    if train:
        n = b * length
        if n < 2:
            raise DegenerateStatisticsError("batch norm in train mode needs more than one value per channel")
        mean = x.mean(axis=(0, 2), keepdims=True)
        var = ((x - mean) ** 2).mean(axis=(0, 2), keepdims=True)
        if params.buffers:
            rm, rv = params.buffers["running_mean"], params.buffers["running_var"]
            rm *= 1 - BN_MOMENTUM
            rm += BN_MOMENTUM * mean.ravel()
            rv *= 1 - BN_MOMENTUM
            rv += BN_MOMENTUM * var.ravel() * (n / (n - 1))
    else:
        mean = params.buffers["running_mean"][None, :, None]
        var = params.buffers["running_var"][None, :, None]
    y, xhat, inv_std = _norm_apply(x, mean, var, params)
    return y, (xhat, inv_std, train)


def batchnorm1d_backward(grad_out: np.ndarray, cache, params: ParamSet) -> np.ndarray:
    xhat, inv_std, train = cache
    params.grads["gain"] += (grad_out * xhat).sum(axis=(0, 2))
    params.grads["shift"] += grad_out.sum(axis=(0, 2))
    dxhat = grad_out * params["gain"][None, :, None]
    if not train:
        return (dxhat * inv_std).astype(grad_out.dtype, copy=False)
    n = grad_out.shape[0] * grad_out.shape[2]
    s1 = dxhat.sum(axis=(0, 2), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
    return ((inv_std / n) * (n * dxhat - s1 - xhat * s2)).astype(grad_out.dtype, copy=False)


def instancenorm1d_forward(x: np.ndarray, params: ParamSet):
    """Per-sample, per-channel normalization over the length axis. Returns ``(y, cache)``."""
    _check_3d(x)
    c, length = x.shape[1], x.shape[2]
    if params["gain"].shape != (c,):
        raise DimensionError(f"channel axis: instance norm has {params['gain'].shape[0]} channels, input {c}")
    if length < 2:
        raise DegenerateStatisticsError("instance norm needs length > 1")
    mean = x.mean(axis=2, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=2, keepdims=True)
    y, xhat, inv_std = _norm_apply(x, mean, var, params)
    return y, (xhat, inv_std)


def instancenorm1d_backward(grad_out: np.ndarray, cache, params: ParamSet) -> np.ndarray:
    xhat, inv_std = cache
    params.grads["gain"] += (grad_out * xhat).sum(axis=(0, 2))
    params.grads["shift"] += grad_out.sum(axis=(0, 2))
    dxhat = grad_out * params["gain"][None, :, None]
    n = grad_out.shape[2]
    s1 = dxhat.sum(axis=2, keepdims=True)
    s2 = (dxhat * xhat).sum(axis=2, keepdims=True)
    return ((inv_std / n) * (n * dxhat - s1 - xhat * s2)).astype(grad_out.dtype, copy=False)


# --------------------------------------------------------------------------
# elementwise

def _check_activation(kind: str) -> None:
    if kind not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_forward(x: np.ndarray, kind: str, alpha: float = LEAKY_SLOPE) -> np.ndarray:
    _check_activation(kind)
    if kind == "identity":
        return x
    if kind == "relu":
        return np.maximum(x, 0)
    return np.where(x >= 0, x, x * x.dtype.type(alpha))


def activation_backward(x: np.ndarray, grad_out: np.ndarray, kind: str, alpha: float = LEAKY_SLOPE) -> np.ndarray:
    """``x`` is the forward-pass input; its sign selects the slope."""
    _check_activation(kind)
    if kind == "identity":
        return grad_out
    if kind == "relu":
        return np.where(x >= 0, grad_out, 0).astype(grad_out.dtype, copy=False)
    return np.where(x >= 0, grad_out, grad_out * grad_out.dtype.type(alpha))


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator | None, train: bool = True):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is None when no units are dropped."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigurationError("dropout in train mode needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask
