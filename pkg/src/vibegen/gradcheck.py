"""Finite-difference verification of every layer kernel and of both GAN objectives."""
from __future__ import annotations

import numpy as np

from . import kernels as K
from .kernels import ConvSpec, ParamSet
from .model import GanModel, Network, tiny_archs
from .oracles import finite_difference_check
from .training import critic_objective, generator_objective

# objective checks contain coordinates whose true gradient is exactly zero
# (e.g. biases feeding instance norm); their central differences are pure
# round-off of order 1e-10 * |loss|
OBJECTIVE_FLOOR = 1e-4


def _random_params(values: dict, rng, scale=0.5) -> ParamSet:
    ps = ParamSet({k: rng.standard_normal(shape) * scale for k, shape in values.items()})
    return ps


def _check_layer(forward, backward, x, ps: ParamSet, rng, h):
    proj = rng.standard_normal(forward().shape)
    gx = backward(proj)
    arrays = [x, *ps.values.values()]
    grads = [gx, *(ps.grads[k] for k in ps.values)]
    return finite_difference_check(lambda: float((forward() * proj).sum()), arrays, grads, h)


def conv_error(rng, h=1e-6, transposed=False) -> float:
    spec = ConvSpec(3, 4, 4, 2, 1, transposed=transposed)
    ps = _random_params({"weight": spec.weight_shape, "bias": (spec.out_channels,)}, rng)
    x = rng.standard_normal((2, 3, 16 if not transposed else 8))
    fwd = K.conv_transpose1d_forward if transposed else K.conv1d_forward
    bwd = K.conv_transpose1d_backward if transposed else K.conv1d_backward
    return _check_layer(lambda: fwd(x, spec, ps), lambda g: bwd(x, g, spec, ps), x, ps, rng, h)


def batchnorm_error(rng, h=1e-6) -> float:
    ps = ParamSet.for_norm(3, np.float64, running=True)
    ps.values["gain"][...] = rng.uniform(0.5, 1.5, 3)
    ps.values["shift"][...] = rng.standard_normal(3)
    x = rng.standard_normal((4, 3, 16))
    cache = {}

    def fwd():
        y, cache["c"] = K.batchnorm1d_forward(x, ps, train=True)
        return y

    return _check_layer(fwd, lambda g: K.batchnorm1d_backward(g, cache["c"], ps), x, ps, rng, h)


def instancenorm_error(rng, h=1e-6) -> float:
    ps = ParamSet.for_norm(3, np.float64)
    ps.values["gain"][...] = rng.uniform(0.5, 1.5, 3)
    ps.values["shift"][...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 3, 32))
    cache = {}

    def fwd():
        y, cache["c"] = K.instancenorm1d_forward(x, ps)
        return y

    return _check_layer(fwd, lambda g: K.instancenorm1d_backward(g, cache["c"], ps), x, ps, rng, h)


def activation_error(rng, kind: str, h=1e-6) -> float:
    x = rng.standard_normal((2, 3, 16))
    x[np.abs(x) < 0.01] = 0.5  # stay off the kink
    ps = ParamSet({})
    return _check_layer(lambda: K.activation_forward(x, kind), lambda g: K.activation_backward(x, g, kind), x, ps, rng, h)


def dropout_error(rng, h=1e-6) -> float:
    x = rng.standard_normal((2, 3, 16))
    _, mask = K.dropout_forward(x, 0.3, rng, train=True)
    return _check_layer(lambda: x * mask, lambda g: K.dropout_backward(g, mask), x, ParamSet({}), rng, h)


def tiny_model(seed: int = 0, latent: int = 8) -> GanModel:
    """64-bit shrunken GAN with weights large enough for finite differences to resolve."""
    gen, critic = tiny_archs(latent)
    rng = np.random.default_rng(seed)
    model = GanModel(Network(gen, np.float64, rng), Network(critic, np.float64, rng), seed=seed)
    for net in (model.generator, model.critic):
        for _, ps in net.named_param_sets():
            for v in ps.values.values():
                v += rng.standard_normal(v.shape) * 0.3
    model.critic.dropout_rate = 0.3
    return model


def _flatten_grads(net: Network):
    sets = [ps for _, ps in net.named_param_sets()]
    return [v for ps in sets for v in ps.values.values()], [ps.grads[k].copy() for ps in sets for k in ps.values]


def critic_chain_error(seed: int = 0, h=1e-6) -> float:
    model = tiny_model(seed)
    rng = np.random.default_rng(seed + 1)
    real = rng.standard_normal((3, 1, model.critic.arch.input_length))
    z = rng.standard_normal((3, model.latent_channels, 1))
    loss = lambda: critic_objective(model, real, z, np.random.default_rng(seed + 2))
    loss()
    arrays, grads = _flatten_grads(model.critic)
    return finite_difference_check(loss, arrays, grads, h, floor=OBJECTIVE_FLOOR)


def generator_chain_error(seed: int = 0, h=1e-6) -> float:
    model = tiny_model(seed)
    z = np.random.default_rng(seed + 1).standard_normal((4, model.latent_channels, 1))
    loss = lambda: generator_objective(model, z, np.random.default_rng(seed + 2))
    loss()
    arrays, grads = _flatten_grads(model.generator)
    return finite_difference_check(loss, arrays, grads, h, floor=OBJECTIVE_FLOOR)


def run_suite(seed: int = 0, h: float = 1e-6) -> dict[str, float]:
    """Max relative error per check, all in float64."""
    rng = np.random.default_rng(seed)
    return {
        "conv1d": conv_error(rng, h),
        "conv_transpose1d": conv_error(rng, h, transposed=True),
        "batchnorm1d": batchnorm_error(rng, h),
        "instancenorm1d": instancenorm_error(rng, h),
        "relu": activation_error(rng, "relu", h),
        "leaky_relu": activation_error(rng, "leaky_relu", h),
        "identity": activation_error(rng, "identity", h),
        "dropout": dropout_error(rng, h),
        "critic_chain": critic_chain_error(seed, h),
        "generator_chain": generator_chain_error(seed, h),
    }
