"""Slow reference implementations used to cross-check the production kernels.

These are deliberately written as loops over output coordinates so that they
share no indexing tricks with :mod:`vibegen.kernels`.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def naive_conv1d(x, weight, bias, stride, padding):
    b, c, length = x.shape
    o, _, k = weight.shape
    t = (length + 2 * padding - k) // stride + 1
    out = np.zeros((b, o, t), dtype=np.float64)
    for n in range(b):
        for oc in range(o):
            for pos in range(t):
                acc = bias[oc]
                for ic in range(c):
                    for j in range(k):
                        src = pos * stride + j - padding
                        if 0 <= src < length:
                            acc += weight[oc, ic, j] * x[n, ic, src]
                out[n, oc, pos] = acc
    return out


def naive_conv_transpose1d(x, weight, bias, stride, padding):
    """Scatter-add form: every input sample spreads ``kernel`` taps into the output."""
    b, c, length = x.shape
    _, o, k = weight.shape
    lout = (length - 1) * stride - 2 * padding + k
    out = np.zeros((b, o, lout), dtype=np.float64)
    out += np.asarray(bias, dtype=np.float64)[None, :, None]
    for n in range(b):
        for ic in range(c):
            for i in range(length):
                for oc in range(o):
                    for j in range(k):
                        dst = i * stride + j - padding
                        if 0 <= dst < lout:
                            out[n, oc, dst] += weight[ic, oc, j] * x[n, ic, i]
    return out


def finite_difference_check(
    loss: Callable[[], float],
    arrays: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    h: float = 1e-6,
    floor: float = 1e-12,
) -> float:
    """Max relative error between ``analytic`` gradients and central differences.

    ``loss`` is re-evaluated after each in-place perturbation of ``arrays``;
    every coordinate of every array is visited. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        if arr.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} != array shape {arr.shape}")
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            a = float(gflat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
