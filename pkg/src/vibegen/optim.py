"""AdamW with decoupled weight decay, and critic weight clipping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import TrainingDivergenceError
from .kernels import ParamSet


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: Mapping[str, ParamSet], state: AdamWState, cfg) -> None:
    """One AdamW update of every learnable array in ``params``.

    ``cfg`` supplies ``learning_rate``, ``betas``, ``eps`` and ``weight_decay``.
    The decay shrinks the pre-update weights and never enters the moment
    estimates. Gradients are left in place.
    """
    for set_name, ps in params.items():
        for name, g in ps.grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError(f"non-finite gradient in {set_name}.{name}")

    lr = cfg.learning_rate
    beta1, beta2 = cfg.betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for set_name, ps in params.items():
        for name, theta in ps.values.items():
            key = f"{set_name}.{name}"
            g = ps.grads[name]
            if key not in state.m:
                state.m[key] = np.zeros_like(theta)
                state.v[key] = np.zeros_like(theta)
            m, v = state.m[key], state.v[key]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            if cfg.weight_decay:
                theta -= theta * theta.dtype.type(lr * cfg.weight_decay)
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            theta -= update.astype(theta.dtype, copy=False)


def clip_weights(params: Mapping[str, ParamSet], clip_value: float) -> None:
    """Clamp every learnable critic array (weights, biases, norm gains and shifts) to [-c, c]."""
    for ps in params.values():
        for theta in ps.values.values():
            np.clip(theta, -clip_value, clip_value, out=theta)
