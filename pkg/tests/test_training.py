import hashlib

import numpy as np
import pytest

from vibegen.checkpoint import load_checkpoint
from vibegen.errors import ConfigurationError
from vibegen.gradcheck import tiny_model
from vibegen.model import GanModel
from vibegen.oracles import finite_difference_check
from vibegen.training import (
    TrainConfig,
    critic_objective,
    critic_step,
    generator_objective,
    generator_step,
    noise_sigma,
    train,
)


def digest(net) -> str:
    h = hashlib.sha256()
    for name, ps in net.named_param_sets():
        for key, arr in ps.arrays():
            h.update(name.encode() + key.encode() + arr.tobytes())
    return h.hexdigest()


def zero_critic(model):
    for _, ps in model.critic.named_param_sets():
        for v in ps.values.values():
            v[...] = 0


def test_config_validation():
    TrainConfig().validate()
    for bad in (dict(learning_rate=0), dict(epochs=0), dict(clip_value=0), dict(dropout_rate=1.0), dict(batch_size=1)):
        with pytest.raises(ConfigurationError):
            TrainConfig(**bad).validate()


def test_defaults():
    cfg = TrainConfig()
    assert cfg.learning_rate == 1e-5 and cfg.epochs == 45


def test_noise_schedule():
    cfg = TrainConfig(epochs=10, noise_sigma0_fraction=0.1)
    assert noise_sigma(0, cfg, 2.0) == pytest.approx(0.2)
    assert noise_sigma(10, cfg, 2.0) == 0.0
    assert noise_sigma(5, cfg, 2.0) == pytest.approx(0.1)
    assert noise_sigma(12, cfg, 2.0) == 0.0


def test_critic_objective_gradcheck():
    m = tiny_model(1)
    real = np.random.default_rng(2).standard_normal((3, 1, 8))
    z = np.random.default_rng(3).standard_normal((3, 8, 1))
    critic_objective(m, real, z, np.random.default_rng(4))
    sets = [ps for _, ps in m.critic.named_param_sets()]
    arrays = [v for ps in sets for v in ps.values.values()]
    grads = [ps.grads[k].copy() for ps in sets for k in ps.values]
    # exactly-zero gradients (final bias; biases feeding instance norm) leave only round-off
    err = finite_difference_check(
        lambda: critic_objective(m, real, z, np.random.default_rng(4)), arrays, grads, floor=1e-4
    )
    assert err < 1e-4


def test_generator_objective_gradcheck():
    m = tiny_model(5)
    z = np.random.default_rng(6).standard_normal((4, 8, 1))
    critic_before = digest(m.critic)
    generator_objective(m, z, np.random.default_rng(7))
    sets = [ps for _, ps in m.generator.named_param_sets()]
    arrays = [v for ps in sets for v in ps.values.values()]
    grads = [ps.grads[k].copy() for ps in sets for k in ps.values]
    err = finite_difference_check(
        lambda: generator_objective(m, z, np.random.default_rng(7)), arrays, grads, floor=1e-4
    )
    assert err < 1e-4
    assert digest(m.critic) == critic_before
    assert all(not g.any() for _, ps in m.critic.named_param_sets() for g in ps.grads.values())


@pytest.fixture
def full_model():
    return GanModel.create(seed=3)


def test_zero_critic_gives_zero_losses(full_model, small_record):
    from vibegen.data import sample_windows

    rng = np.random.default_rng(0)
    cfg = TrainConfig(batch_size=4)
    zero_critic(full_model)
    real = sample_windows(small_record, 4, rng)
    assert critic_step(full_model, real, cfg, rng, noise_std=0.01) == 0.0
    assert generator_step(full_model, cfg, rng) == 0.0
    # gradient reaching the generator is zero, so only weight decay moves it
    assert all(not g.any() for _, ps in full_model.generator.named_param_sets() for g in ps.grads.values())


def test_critic_step_clips_and_isolates(full_model, small_record):
    from vibegen.data import sample_windows

    rng = np.random.default_rng(1)
    cfg = TrainConfig(batch_size=4, clip_value=0.01)
    gen_before = [p.copy() for _, ps in full_model.generator.named_param_sets() for p in ps.values.values()]
    critic_step(full_model, sample_windows(small_record, 4, rng), cfg, rng, 0.01)
    worst = max(np.abs(v).max() for _, ps in full_model.critic.named_param_sets() for v in ps.values.values())
    assert worst <= 0.01
    gen_after = [p for _, ps in full_model.generator.named_param_sets() for p in ps.values.values()]
    assert all(np.array_equal(a, b) for a, b in zip(gen_before, gen_after))


def test_generator_step_isolation(full_model):
    rng = np.random.default_rng(2)
    cfg = TrainConfig(batch_size=4)
    c0, g0 = digest(full_model.critic), digest(full_model.generator)
    generator_step(full_model, cfg, rng)
    assert digest(full_model.critic) == c0
    assert digest(full_model.generator) != g0


def test_train_one_epoch_bookkeeping(tmp_path, small_record):
    m = GanModel.create(seed=7)
    cfg = TrainConfig(epochs=1, seed=7, batch_size=8, eval_samples_per_epoch=8)
    log = train(m, small_record, cfg, out_dir=tmp_path)
    assert len(log.records) == 1
    rec = log.records[0]
    assert rec.critic_updates == cfg.critic_iters_per_gen * rec.generator_updates
    assert np.isfinite([rec.critic_loss, rec.gen_loss, rec.fid, rec.noise_sigma]).all()
    assert (tmp_path / "ckpt_epoch_001.wdcg").exists()
    lines = (tmp_path / "train_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,critic_loss,gen_loss,fid,noise_sigma,seconds"
    assert len(lines) == 2
    assert load_checkpoint(tmp_path / "ckpt_epoch_001.wdcg").epoch == 1


def test_resume_matches_uninterrupted_run(tmp_path, small_record):
    cfg = TrainConfig(epochs=2, seed=5, batch_size=8, eval_samples_per_epoch=8)
    straight = tmp_path / "straight"
    train(GanModel.create(seed=5), small_record, cfg, out_dir=straight)

    first = tmp_path / "resumed"
    train(GanModel.create(seed=5), small_record, TrainConfig(**{**cfg.__dict__, "epochs": 1}), out_dir=first)
    resumed = load_checkpoint(first / "ckpt_epoch_001.wdcg")
    train(resumed, small_record, cfg, out_dir=first)
    a = (straight / "ckpt_epoch_002.wdcg").read_bytes()
    b = (first / "ckpt_epoch_002.wdcg").read_bytes()
    assert a == b
    assert (straight / "train_log.csv").read_bytes() == (first / "train_log.csv").read_bytes()


def test_keep_checkpoints(tmp_path, small_record):
    cfg = TrainConfig(epochs=3, seed=1, batch_size=4, eval_samples_per_epoch=4, keep_checkpoints=1)
    train(GanModel.create(seed=1), small_record, cfg, out_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.wdcg")) == ["ckpt_epoch_003.wdcg"]
