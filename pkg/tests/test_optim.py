import math
from types import SimpleNamespace

import numpy as np
import pytest

from vibegen.errors import TrainingDivergenceError
from vibegen.kernels import ParamSet
from vibegen.optim import AdamWState, adamw_step, clip_weights


def cfg(lr=1e-3, wd=0.0, betas=(0.9, 0.999), eps=1e-8):
    return SimpleNamespace(learning_rate=lr, weight_decay=wd, betas=betas, eps=eps)


def scalar_set(value):
    return {"p": ParamSet({"w": np.array([value], dtype=np.float64)})}


def hand_adamw(theta, grads, lr, wd, b1, b2, eps):
    """The AdamW recurrence stepped by hand on python floats."""
    m = v = 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        theta = theta - lr * wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        trace.append((theta, m, v))
    return trace


@pytest.mark.parametrize("wd", [0.0, 0.01])
def test_matches_hand_stepped_oracle(wd):
    c = cfg(lr=1e-2, wd=wd, betas=(0.5, 0.9))
    params, state = scalar_set(0.8), AdamWState()
    grads = [0.3, 0.3, 0.3, -0.1, 0.25]
    expected = hand_adamw(0.8, grads, 1e-2, wd, 0.5, 0.9, 1e-8)
    for g, (theta, m, v) in zip(grads, expected):
        params["p"].grads["w"][0] = g
        adamw_step(params, state, c)
        assert abs(params["p"]["w"][0] - theta) <= 1e-12
        assert abs(state.m["p.w"][0] - m) <= 1e-12
        assert abs(state.v["p.w"][0] - v) <= 1e-12
    assert state.step == 5


def test_first_step_is_lr_sized():
    params, state = scalar_set(1.0), AdamWState()
    params["p"].grads["w"][0] = 7.0
    adamw_step(params, state, cfg(lr=1e-3))
    assert params["p"]["w"][0] == pytest.approx(1.0 - 1e-3, rel=1e-9)


def test_zero_gradient_no_decay_is_noop():
    params, state = scalar_set(0.42), AdamWState()
    for _ in range(3):
        adamw_step(params, state, cfg())
    assert params["p"]["w"][0] == 0.42


def test_decoupled_decay_shrinks_multiplicatively():
    params, state = scalar_set(2.0), AdamWState()
    for _ in range(4):
        adamw_step(params, state, cfg(lr=0.1, wd=0.5))
    assert params["p"]["w"][0] == pytest.approx(2.0 * (1 - 0.05) ** 4, rel=1e-14)


def test_gradients_left_in_place():
    params, state = scalar_set(1.0), AdamWState()
    params["p"].grads["w"][0] = 0.5
    adamw_step(params, state, cfg())
    assert params["p"].grads["w"][0] == 0.5


def test_nan_gradient_names_parameter():
    params, state = scalar_set(1.0), AdamWState()
    params["p"].grads["w"][0] = np.nan
    with pytest.raises(TrainingDivergenceError, match="p.w"):
        adamw_step(params, state, cfg())


def test_clip_weights():
    ps = ParamSet({"weight": np.array([5.0, -3.0, 0.004]), "bias": np.array([-0.02])})
    clip_weights({"a": ps}, 0.01)
    np.testing.assert_array_equal(ps["weight"], [0.01, -0.01, 0.004])
    np.testing.assert_array_equal(ps["bias"], [-0.01])
    inside = ParamSet({"weight": np.array([0.003, -0.0099])})
    before = inside["weight"].copy()
    clip_weights({"b": inside}, 0.01)
    np.testing.assert_array_equal(inside["weight"], before)
