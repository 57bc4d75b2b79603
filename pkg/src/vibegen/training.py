"""Wasserstein GAN training loop with weight clipping and noisy real batches."""
from __future__ import annotations

import logging
import math
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import save_checkpoint
from .data import WINDOW, SignalDataset, WindowBatch, dataset_stats, sample_windows
from .errors import ConfigurationError, TrainingDivergenceError
from .evaluation import pooled_fid
from .model import GanModel, generate, sample_latent
from .optim import AdamWState, adamw_step, clip_weights

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "critic_loss", "gen_loss", "fid", "noise_sigma", "seconds")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 45
    batch_size: int = 64
    critic_iters_per_gen: int = 5
    clip_value: float = 0.01
    dropout_rate: float = 0.3
    noise_sigma0_fraction: float = 0.1
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 0.01
    eps: float = 1e-8
    eval_samples_per_epoch: int = 64
    seed: int = 0
    # 0 means floor(len(record) / 1024): 256 windows for the 262,144-sample record
    windows_per_epoch: int = 0
    # 0 keeps every epoch checkpoint
    keep_checkpoints: int = 0
    deterministic: bool = True

    @property
    def betas(self) -> tuple[float, float]:
        return (self.beta1, self.beta2)

    def validate(self) -> "TrainConfig":
        problems = []
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if not self.clip_value > 0:
            problems.append("clip_value must be > 0")
        if not 0 <= self.dropout_rate < 1:
            problems.append("dropout_rate must be in [0, 1)")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2 (batch norm needs statistics)")
        if self.critic_iters_per_gen < 1:
            problems.append("critic_iters_per_gen must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append("betas must be in [0, 1)")
        if self.eps <= 0 or self.weight_decay < 0 or self.noise_sigma0_fraction < 0:
            problems.append("eps must be > 0; weight_decay and noise_sigma0_fraction >= 0")
        if self.eval_samples_per_epoch < 1:
            problems.append("eval_samples_per_epoch must be >= 1")
        if self.windows_per_epoch < 0 or self.keep_checkpoints < 0:
            problems.append("windows_per_epoch and keep_checkpoints must be >= 0")
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochRecord:
    epoch: int
    critic_loss: float
    gen_loss: float
    fid: float
    noise_sigma: float
    seconds: float
    critic_updates: int
    generator_updates: int


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path, with_time: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for r in self.records:
                secs = r.seconds if with_time else 0.0
                fh.write(f"{r.epoch},{r.critic_loss!r},{r.gen_loss!r},{r.fid!r},{r.noise_sigma!r},{secs!r}\n")


def noise_sigma(epoch: int, cfg: TrainConfig, dataset_std: float) -> float:
    """Std of the Gaussian noise added to real windows: linear decay from sigma0 to 0."""
    sigma0 = cfg.noise_sigma0_fraction * dataset_std
    return sigma0 * max(0.0, 1.0 - epoch / cfg.epochs)


def _real_tensor(real, dtype) -> np.ndarray:
    x = real.tensor if isinstance(real, WindowBatch) else real
    return np.asarray(x, dtype=dtype)


def critic_objective(model: GanModel, real: np.ndarray, z: np.ndarray, rng) -> float:
    """Loss mean(C(G(z))) - mean(C(real)); leaves its gradient in the critic's buffers.

    Real and fake windows go through the critic as one batch; instance norm is
    per sample and the dropout masks are drawn per element, so this equals two
    separate passes.
    """
    b = real.shape[0]
    fake = model.generator.forward(z, train=True)
    scores = model.critic.forward(np.concatenate([real, fake]), train=True, rng=rng)
    loss = float(scores[b:].mean(dtype=np.float64) - scores[:b].mean(dtype=np.float64))
    grad = np.empty_like(scores)
    grad[:b] = -1.0 / b
    grad[b:] = 1.0 / fake.shape[0]
    model.critic.zero_grad()
    model.critic.backward(grad, input_grad=False)
    return loss


def generator_objective(model: GanModel, z: np.ndarray, rng) -> float:
    """Loss -mean(C(G(z))); leaves its gradient in the generator's buffers only."""
    fake = model.generator.forward(z, train=True)
    scores = model.critic.forward(fake, train=True, rng=rng)
    loss = -float(scores.mean(dtype=np.float64))
    model.critic.zero_grad()
    grad_fake = model.critic.backward(np.full_like(scores, -1.0 / scores.shape[0]))
    model.critic.zero_grad()
    model.generator.zero_grad()
    model.generator.backward(grad_fake, input_grad=False)
    return loss


def _optimizer(model: GanModel, name: str) -> AdamWState:
    return model.optimizers.setdefault(name, AdamWState())


def critic_step(model: GanModel, real, cfg: TrainConfig, rng, noise_std: float = 0.0) -> float:
    x = _real_tensor(real, model.dtype)
    if noise_std > 0:
        x = x + rng.normal(0.0, noise_std, size=x.shape).astype(model.dtype)
    z = sample_latent(x.shape[0], rng, model.latent_channels, model.dtype)
    model.critic.dropout_rate = cfg.dropout_rate
    loss = critic_objective(model, x, z, rng)
    if not math.isfinite(loss):
        raise TrainingDivergenceError(f"critic loss became {loss} at epoch {model.epoch}, step {model.step}")
    critic = model.critic.param_sets()
    adamw_step(critic, _optimizer(model, "critic"), cfg)
    clip_weights(critic, cfg.clip_value)
    return loss


def generator_step(model: GanModel, cfg: TrainConfig, rng) -> float:
    z = sample_latent(cfg.batch_size, rng, model.latent_channels, model.dtype)
    model.critic.dropout_rate = cfg.dropout_rate
    loss = generator_objective(model, z, rng)
    if not math.isfinite(loss):
        raise TrainingDivergenceError(f"generator loss became {loss} at epoch {model.epoch}, step {model.step}")
    adamw_step(model.generator.param_sets(), _optimizer(model, "generator"), cfg)
    return loss


def epoch_fid(model: GanModel, ds: SignalDataset, count: int, rng) -> float:
    real = sample_windows(ds, count, rng).tensor
    fake = generate(model, count, rng)
    return pooled_fid(real, fake)


def _restore_rng(model: GanModel, cfg: TrainConfig) -> np.random.Generator:
    rng = np.random.default_rng([cfg.seed, 1])
    state = model.meta.get("rng")
    if state is not None:
        rng.bit_generator.state = state
    return rng


def train(
    model: GanModel,
    ds: SignalDataset,
    cfg: TrainConfig,
    out_dir=None,
    on_critic_step: Callable[[GanModel], None] | None = None,
) -> TrainLog:
    """Train from ``model.epoch`` up to ``cfg.epochs``.

    With ``out_dir`` set, ``train_log.csv`` is rewritten and a checkpoint
    ``ckpt_epoch_NNN.wdcg`` saved after every epoch. In deterministic mode the
    ``seconds`` column is written as 0 (wall times go to ``timing.csv``) so
    that repeated runs are byte-identical.
    """
    cfg.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rng = _restore_rng(model, cfg)
    _optimizer(model, "critic")
    _optimizer(model, "generator")
    _, data_std, _, _ = dataset_stats(ds)
    windows = cfg.windows_per_epoch or len(ds) // WINDOW
    iters = math.ceil(windows / cfg.batch_size)
    history = TrainLog([EpochRecord(**r) for r in model.meta.get("history", [])])
    last_ckpt = None
    saved: list[Path] = []

    limits = threadpool_limits(limits=1) if cfg.deterministic else nullcontext()
    with limits:
        for epoch in range(model.epoch, cfg.epochs):
            t0 = time.perf_counter()
            sigma = noise_sigma(epoch, cfg, data_std)
            c_losses, g_losses = [], []
            try:
                for _ in range(iters):
                    for _ in range(cfg.critic_iters_per_gen):
                        real = sample_windows(ds, cfg.batch_size, rng)
                        c_losses.append(critic_step(model, real, cfg, rng, sigma))
                        if on_critic_step is not None:
                            on_critic_step(model)
                    g_losses.append(generator_step(model, cfg, rng))
                    model.step += 1
                fid = epoch_fid(model, ds, cfg.eval_samples_per_epoch, rng)
                if not math.isfinite(fid):
                    raise TrainingDivergenceError(f"epoch FID became {fid} at epoch {epoch + 1}")
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(str(exc), last_ckpt) from exc

            rec = EpochRecord(
                epoch=epoch + 1,
                critic_loss=float(np.mean(c_losses)),
                gen_loss=float(np.mean(g_losses)),
                fid=fid,
                noise_sigma=sigma,
                seconds=time.perf_counter() - t0,
                critic_updates=len(c_losses),
                generator_updates=len(g_losses),
            )
            history.records.append(rec)
            log.info("epoch %d  critic %.6g  gen %.6g  fid %.6g  sigma %.4g  (%.1fs)",
                     rec.epoch, rec.critic_loss, rec.gen_loss, rec.fid, rec.noise_sigma, rec.seconds)
            model.epoch = epoch + 1
            stored = [asdict(r) | ({"seconds": 0.0} if cfg.deterministic else {}) for r in history.records]
            model.meta = {"rng": rng.bit_generator.state, "history": stored}
            if out is not None:
                history.to_csv(out / "train_log.csv", with_time=not cfg.deterministic)
                if cfg.deterministic:
                    with open(out / "timing.csv", "w", encoding="utf-8", newline="\n") as fh:
                        fh.write("epoch,seconds\n")
                        fh.writelines(f"{r.epoch},{r.seconds!r}\n" for r in history.records)
                last_ckpt = save_checkpoint(model, out / f"ckpt_epoch_{model.epoch:03d}.wdcg")
                saved.append(last_ckpt)
                if cfg.keep_checkpoints and len(saved) > cfg.keep_checkpoints:
                    saved.pop(0).unlink(missing_ok=True)
    return history
