"""Generator and critic networks assembled from the kernels.

The latent code is a ``(B, 256, 1)`` tensor: 256 channels of length one. A first
transposed convolution with kernel 64, stride 2 and no padding lifts length 1 to
64, and four (4, 2, 1) transposed convolutions double it up to 1024. The critic
mirrors this, ending in a kernel-64 convolution that collapses 64 samples to a
single unbounded score.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels as K
from .errors import ConfigurationError, DimensionError
from .kernels import ConvSpec, ParamSet

LATENT_CHANNELS = 256
WINDOW = 1024
NORMS = ("none", "batch", "instance")


@dataclass(frozen=True)
class LayerSpec:
    conv: ConvSpec
    norm: str = "none"
    activation: str = "identity"
    dropout: bool = False

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        if self.activation not in K.ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkArch:
    input_length: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.conv.out_channels != nxt.conv.in_channels:
                raise ConfigurationError(
                    f"channel plan broken: {prev.conv.out_channels} -> {nxt.conv.in_channels}"
                )
        self.length_trace()

    @property
    def in_channels(self) -> int:
        return self.layers[0].conv.in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].conv.out_channels

    def length_trace(self) -> list[int]:
        """Lengths seen at the input and after every layer."""
        trace = [self.input_length]
        for layer in self.layers:
            trace.append(layer.conv.output_length(trace[-1]))
        return trace

    @property
    def output_length(self) -> int:
        return self.length_trace()[-1]


def generator_arch(latent: int = LATENT_CHANNELS, channels=(128, 64, 32, 16, 1)) -> NetworkArch:
    """Five transposed convs, (64,2,0) then 4 x (4,2,1); BN + ReLU after the first four."""
    chans = (latent, *channels)
    layers = []
    for i in range(len(channels)):
        k, s, p = (64, 2, 0) if i == 0 else (4, 2, 1)
        last = i == len(channels) - 1
        layers.append(
            LayerSpec(
                ConvSpec(chans[i], chans[i + 1], k, s, p, transposed=True),
                norm="none" if last else "batch",
                activation="identity" if last else "relu",
            )
        )
    return NetworkArch(1, tuple(layers))


def critic_arch(channels=(16, 32, 64, 128, 1), input_length: int = WINDOW) -> NetworkArch:
    """Four (4,2,1) convs then a (64,2,0) conv to a scalar score.

    LeakyReLU(0.2) and dropout follow layers 1-4; instance norm sits on 2-4.
    """
    chans = (1, *channels)
    n = len(channels)
    layers = []
    for i in range(n):
        last = i == n - 1
        k, s, p = (64, 2, 0) if last else (4, 2, 1)
        layers.append(
            LayerSpec(
                ConvSpec(chans[i], chans[i + 1], k, s, p),
                norm="none" if (last or i == 0) else "instance",
                activation="identity" if last else "leaky_relu",
                dropout=not last,
            )
        )
    return NetworkArch(input_length, tuple(layers))


def tiny_archs(latent: int = 8) -> tuple[NetworkArch, NetworkArch]:
    """Shrunken generator/critic pair (lengths 1 -> 4 -> 8) for gradient checks."""
    gen = NetworkArch(1, (
        LayerSpec(ConvSpec(latent, 4, 4, 2, 0, transposed=True), "batch", "relu"),
        LayerSpec(ConvSpec(4, 1, 4, 2, 1, transposed=True)),
    ))
    critic = NetworkArch(8, (
        LayerSpec(ConvSpec(1, 4, 4, 2, 1), "none", "leaky_relu", dropout=True),
        LayerSpec(ConvSpec(4, 4, 4, 2, 1), "instance", "leaky_relu", dropout=True),
        LayerSpec(ConvSpec(4, 1, 2, 2, 0)),
    ))
    return gen, critic


class _Block:
    """conv -> norm -> activation -> dropout, with the caches its backward needs."""

    def __init__(self, spec: LayerSpec, dtype, rng):
        self.spec = spec
        self.conv = ParamSet.for_conv(spec.conv, dtype, rng)
        self.norm = None
        if spec.norm != "none":
            self.norm = ParamSet.for_norm(spec.conv.out_channels, dtype, running=spec.norm == "batch")
        self._cache = None

    def param_sets(self):
        yield "conv", self.conv
        if self.norm is not None:
            yield "norm", self.norm

    def forward(self, x, train: bool, rng, dropout_rate: float):
        spec = self.spec
        if spec.conv.transposed:
            h = K.conv_transpose1d_forward(x, spec.conv, self.conv)
        else:
            h = K.conv1d_forward(x, spec.conv, self.conv)
        norm_cache = None
        if spec.norm == "batch":
            h, norm_cache = K.batchnorm1d_forward(h, self.norm, train)
        elif spec.norm == "instance":
            h, norm_cache = K.instancenorm1d_forward(h, self.norm)
        pre_act = h
        h = K.activation_forward(h, spec.activation)
        mask = None
        if spec.dropout:
            h, mask = K.dropout_forward(h, dropout_rate, rng, train)
        self._cache = (x, norm_cache, pre_act, mask)
        return h

    def backward(self, grad, input_grad: bool = True):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x, norm_cache, pre_act, mask = self._cache
        spec = self.spec
        grad = K.dropout_backward(grad, mask)
        grad = K.activation_backward(pre_act, grad, spec.activation)
        if spec.norm == "batch":
            grad = K.batchnorm1d_backward(grad, norm_cache, self.norm)
        elif spec.norm == "instance":
            grad = K.instancenorm1d_backward(grad, norm_cache, self.norm)
        if spec.conv.transposed:
            return K.conv_transpose1d_backward(x, grad, spec.conv, self.conv, input_grad)
        return K.conv1d_backward(x, grad, spec.conv, self.conv, input_grad)


class Network:
    def __init__(self, arch: NetworkArch, dtype=np.float32, rng: np.random.Generator | None = None):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        self.blocks = [_Block(spec, self.dtype, rng) for spec in arch.layers]
        self.dropout_rate = 0.0

    def named_param_sets(self) -> Iterator[tuple[str, ParamSet]]:
        for i, block in enumerate(self.blocks):
            for kind, ps in block.param_sets():
                yield f"{i}.{kind}", ps

    def param_sets(self) -> dict[str, ParamSet]:
        return dict(self.named_param_sets())

    def num_parameters(self) -> int:
        return sum(v.size for _, ps in self.named_param_sets() for v in ps.values.values())

    def zero_grad(self) -> None:
        for _, ps in self.named_param_sets():
            ps.zero_grad()

    def forward(self, x, train: bool = False, rng=None, trace: list | None = None):
        expected = (self.arch.in_channels, self.arch.input_length)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise DimensionError(f"expected input shape (B, {expected[0]}, {expected[1]}), got {x.shape}")
        h = np.asarray(x, dtype=self.dtype)
        for block in self.blocks:
            h = block.forward(h, train, rng, self.dropout_rate)
            if trace is not None:
                trace.append(h.shape[2])
        return h

    def backward(self, grad, input_grad: bool = True):
        for i, block in enumerate(reversed(self.blocks)):
            is_first = i == len(self.blocks) - 1
            grad = block.backward(grad, input_grad or not is_first)
        return grad


@dataclass
class GanModel:
    generator: Network
    critic: Network
    seed: int = 0
    epoch: int = 0
    step: int = 0
    optimizers: dict = field(default_factory=dict)  # "generator"/"critic" -> AdamWState
    meta: dict = field(default_factory=dict)  # rng state, training history

    @classmethod
    def create(cls, seed: int = 0, dtype=np.float32, gen_arch: NetworkArch | None = None,
               critic_arch_: NetworkArch | None = None) -> "GanModel":
        gen_arch = gen_arch or generator_arch()
        critic_arch_ = critic_arch_ or critic_arch()
        if gen_arch.out_channels != critic_arch_.in_channels or gen_arch.output_length != critic_arch_.input_length:
            raise ConfigurationError("generator output does not fit the critic input")
        rng = np.random.default_rng([seed, 0])
        return cls(Network(gen_arch, dtype, rng), Network(critic_arch_, dtype, rng), seed=seed)

    @property
    def dtype(self) -> np.dtype:
        return self.generator.dtype

    @property
    def latent_channels(self) -> int:
        return self.generator.arch.in_channels


def sample_latent(batch: int, rng: np.random.Generator, channels: int = LATENT_CHANNELS, dtype=np.float32):
    if batch < 1:
        raise ConfigurationError("batch must be >= 1")
    return rng.standard_normal((batch, channels, 1)).astype(dtype)


def generator_forward(model: GanModel, z, train: bool = False, trace: list | None = None):
    return model.generator.forward(z, train=train, trace=trace)


def critic_forward(model: GanModel, x, train: bool = False, rng=None, trace: list | None = None):
    return model.critic.forward(x, train=train, rng=rng, trace=trace)


def generate(model: GanModel, count: int, rng: np.random.Generator, batch: int = 64) -> np.ndarray:
    """Infer-mode samples, shape (count, 1, window)."""
    chunks = []
    for start in range(0, count, batch):
        n = min(batch, count - start)
        z = sample_latent(n, rng, model.latent_channels, model.dtype)
        chunks.append(generator_forward(model, z, train=False))
    return np.concatenate(chunks, axis=0)
