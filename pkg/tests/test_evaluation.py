import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vibegen.errors import DimensionError, VibeGenError
from vibegen.evaluation import (
    box_stats,
    evaluate,
    fid_matrix,
    fid_score,
    histogram_density,
    pooled_fid,
    select_exemplars,
    write_report,
)


def loop_fid(x, y):
    """Score from explicit loops: population mean and std of each window."""
    def moments(w):
        m = 0.0
        for v in w:
            m += float(v)
        m /= len(w)
        ss = 0.0
        for v in w:
            ss += (float(v) - m) ** 2
        return m, math.sqrt(ss / len(w))

    mx, sx = moments(x)
    my, sy = moments(y)
    return abs(mx - my) ** 2 + (sx - sy) ** 2


def test_fid_hand_values():
    x = np.random.default_rng(0).standard_normal(1024)
    assert fid_score(x, x) == 0.0
    assert fid_score(np.full(8, 3.0), np.full(8, 1.0)) == 4.0
    assert fid_score([0.0, 2.0], [0.0, 0.0]) == 2.0


def test_fid_empty_window():
    with pytest.raises(DimensionError):
        fid_score([], [1.0])


def test_fid_sample_std_switch():
    # ddof=1 on [0, 2]: std sqrt(2)
    assert fid_score([0.0, 2.0], [0.0, 0.0], ddof=1) == pytest.approx(1 + 2)


window = arrays(np.float64, 64, elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(window, window)
def test_fid_symmetric_and_nonnegative(x, y):
    assert fid_score(x, y) == fid_score(y, x)
    assert fid_score(x, y) >= 0
    assert fid_score(x, x) == 0


def test_translation_changes_mean_term_only(rng):
    x, y = rng.standard_normal(1024), rng.standard_normal(1024)
    d = 0.37
    shifted = fid_score(x, y + d)
    expected = (abs(x.mean() - y.mean() - d)) ** 2 + (x.std() - (y + d).std()) ** 2
    assert shifted == pytest.approx(expected, rel=1e-12)


def test_fid_matrix_shape_and_diagonal(rng):
    real = rng.standard_normal((256, 1, 1024))
    scores = fid_matrix(real, real)
    assert scores.size == 65_536
    assert not np.diag(scores).any()


def test_fid_matrix_matches_loop_oracle(rng):
    real = rng.standard_normal((4, 1, 1024)) * 0.3
    fake = rng.standard_normal((4, 1, 1024)) * 0.25 + 0.01
    scores = fid_matrix(real, fake)
    for i in range(4):
        for j in range(4):
            assert scores[i, j] == pytest.approx(loop_fid(real[i, 0], fake[j, 0]), rel=1e-12, abs=1e-15)


def test_fid_matrix_order_independent(rng):
    real = rng.standard_normal((6, 1, 128))
    fake = rng.standard_normal((5, 1, 128))
    perm_r, perm_f = rng.permutation(6), rng.permutation(5)
    np.testing.assert_array_equal(
        fid_matrix(real[perm_r], fake[perm_f]), fid_matrix(real, fake)[perm_r][:, perm_f]
    )


def test_pooled_fid(rng):
    pool = rng.standard_normal((8, 1, 256))
    assert pooled_fid(pool, pool) == 0.0
    assert pooled_fid(pool, pool + 0.5) == pytest.approx(0.25, rel=1e-12)
    other = rng.standard_normal((5, 1, 256)) * 1.3
    assert pooled_fid(pool, other) == pytest.approx(loop_fid(pool.ravel(), other.ravel()), rel=1e-12)


def test_histogram_identical_scores():
    edges, density = histogram_density(np.full(50, 0.002), bins=100)
    assert np.count_nonzero(density) == 1
    assert float((density * np.diff(edges)).sum()) == pytest.approx(1.0, abs=1e-9)


def test_histogram_uniform_is_flat(rng):
    edges, density = histogram_density(rng.uniform(0, 2, 1_000_000), bins=100)
    assert len(edges) == 101
    assert np.all(np.abs(density - 0.5) <= 0.05 * 0.5)
    assert abs(float((density * np.diff(edges)).sum()) - 1.0) < 1e-9


def test_histogram_empty():
    with pytest.raises(VibeGenError):
        histogram_density([])


def test_box_stats_hand_values():
    b = box_stats([1, 2, 3, 4, 5])
    assert (b.median, b.q1, b.q3, b.mean) == (3, 2, 4, 3)
    assert (b.whisker_low, b.whisker_high, b.outliers) == (1, 5, 0)
    # six elements: order-statistic positions 1.25, 2.5, 3.75
    b = box_stats([6, 1, 5, 2, 4, 3])
    assert (b.q1, b.median, b.q3) == (2.25, 3.5, 4.75)
    assert (b.whisker_low, b.whisker_high) == (1, 6)


def test_box_stats_outliers_and_constant():
    b = box_stats([1, 2, 3, 4, 100])
    assert b.outliers == 1 and b.whisker_high == 4
    c = box_stats(np.full(1024, -0.5))
    assert {c.mean, c.median, c.q1, c.q3, c.whisker_low, c.whisker_high} == {-0.5}
    assert c.outliers == 0


def test_box_stats_symmetric(rng):
    half = rng.standard_normal(512)
    b = box_stats(np.concatenate([half, -half]))
    assert abs(b.mean - b.median) < 1e-12


def test_exemplars_rules():
    assert select_exemplars(np.array([[0.0, 1.0], [2.0, 3.0]])) == {"low": (0, 0), "median": (1, 0), "high": (1, 1)}
    same = select_exemplars(np.full((3, 3), 0.5))
    assert set(same.values()) == {(0, 0)}


def test_evaluate_report_and_files(tmp_path, rng):
    real = rng.standard_normal((6, 1, 1024)) * 0.2
    fake = rng.standard_normal((6, 1, 1024)) * 0.21
    report = evaluate(real, fake)
    assert report.scores.shape == (6, 6)
    assert report.min <= report.mean <= report.max
    assert abs(float((report.density * np.diff(report.edges)).sum()) - 1) < 1e-9
    assert len(report.box) == 6
    files = {p.name: p for p in write_report(report, real, fake, tmp_path)}
    assert len(files["fid_scores.csv"].read_text().splitlines()) == 1 + 36
    assert len(files["fid_hist.csv"].read_text().splitlines()) == 1 + 100
    assert len(files["exemplars.csv"].read_text().splitlines()) == 1 + 3 * 1024
    lines = files["box_stats.csv"].read_text().splitlines()
    assert lines[0] == "signal,mean,median,q1,q3,whisker_low,whisker_high,outliers"
    assert [l.split(",")[0] for l in lines[1:]] == [
        "low_real", "low_fake", "median_real", "median_fake", "high_real", "high_fake"
    ]
