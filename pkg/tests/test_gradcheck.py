import numpy as np

from vibegen.gradcheck import run_suite, tiny_model


def test_suite_covers_every_layer_and_passes():
    errors = run_suite(seed=3)
    assert {"conv1d", "conv_transpose1d", "batchnorm1d", "instancenorm1d", "dropout",
            "critic_chain", "generator_chain"} <= set(errors)
    assert max(errors.values()) < 1e-4


def test_tiny_model_is_float64_and_shrunken():
    m = tiny_model(0)
    assert m.dtype == np.float64
    assert m.generator.arch.length_trace()[-1] == m.critic.arch.input_length
    assert m.critic.dropout_rate == 0.3
