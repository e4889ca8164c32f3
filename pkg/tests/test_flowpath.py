import numpy as np
import pytest

from freqflow import flowpath, spectral
from freqflow.errors import DimensionError, ParameterError
from freqflow.flowpath import ClassCondition
from freqflow.rng import RngStream


MASKS = spectral.make_masks(8, 8, 8.0, 2.0)


def test_interpolate_endpoints():
    g = np.random.default_rng(0)
    x, n = g.normal(size=(1, 8, 8)), g.normal(size=(1, 8, 8))
    assert np.array_equal(flowpath.interpolate(x, n, 0.0), x)
    assert np.array_equal(flowpath.interpolate(x, n, 1.0), n)


def test_interpolate_quarter():
    x = np.array([[[0.0]] * 2] * 1)
    x = np.zeros((1, 2, 2))
    n = np.full((1, 2, 2), 2.0)
    out = flowpath.interpolate(x, n, 0.25)
    assert np.allclose(out, 0.5)


def test_interpolate_rejects_bad_t():
    x = np.zeros((1, 2, 2))
    with pytest.raises(ParameterError):
        flowpath.interpolate(x, x, -0.1)
    with pytest.raises(ParameterError):
        flowpath.interpolate(x, x, 1.5)


def test_interpolate_affine_in_all_args():
    g = np.random.default_rng(1)
    x, n = g.normal(size=(1, 4, 4)), g.normal(size=(1, 4, 4))
    t1, t2 = 0.3, 0.8
    a = flowpath.interpolate(x, n, t1)
    b = flowpath.interpolate(x, n, t2)
    # difference quotient equals the velocity target for any t1 != t2
    quot = (b - a) / (t2 - t1)
    assert np.max(np.abs(quot - flowpath.velocity_target(x, n))) < 1e-9


def test_velocity_target_cases():
    g = np.random.default_rng(2)
    n = g.normal(size=(1, 4, 4))
    assert np.array_equal(flowpath.velocity_target(np.zeros_like(n), n), n)
    assert np.all(flowpath.velocity_target(n, n) == 0)
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = flowpath.velocity_target(x, np.zeros_like(x))
    assert np.array_equal(out, -x)
    with pytest.raises(DimensionError):
        flowpath.velocity_target(np.zeros((1, 2, 2)), np.zeros((1, 4, 4)))


def test_band_targets_constant_velocity():
    v = np.full((1, 8, 8), 1.5)
    lo, hi = flowpath.band_velocity_targets(v, MASKS)
    assert np.max(np.abs(lo - v)) < 1e-9
    assert np.max(np.abs(hi)) < 1e-9


def test_band_targets_complementary():
    masks = spectral.make_masks(8, 8, 3.0, 3.0)
    v = np.random.default_rng(3).normal(size=(2, 8, 8))
    lo, hi = flowpath.band_velocity_targets(v, masks)
    assert np.max(np.abs(lo + hi - v)) < 1e-7


def test_band_targets_linearity():
    g = np.random.default_rng(4)
    x, n = g.normal(size=(1, 8, 8)), g.normal(size=(1, 8, 8))
    lo_v, hi_v = flowpath.band_velocity_targets(n - x, MASKS)
    lo_n, hi_n = flowpath.band_velocity_targets(n, MASKS)
    lo_x, hi_x = flowpath.band_velocity_targets(x, MASKS)
    assert np.max(np.abs(lo_v - (lo_n - lo_x))) < 1e-9
    assert np.max(np.abs(hi_v - (hi_n - hi_x))) < 1e-9


def test_class_condition_null_vs_labels():
    null = ClassCondition.null()
    assert null.is_null
    assert null.index(8) == 8
    assert ClassCondition(3).index(8) == 3
    with pytest.raises(ParameterError):
        ClassCondition(8).index(8)
    assert null != ClassCondition(0)


def test_draw_sample_deterministic():
    x = np.random.default_rng(5).normal(size=(1, 8, 8)) * 0.5
    s1 = flowpath.draw_sample(x, ClassCondition(1), RngStream(42).child(7), MASKS)
    s2 = flowpath.draw_sample(x, ClassCondition(1), RngStream(42).child(7), MASKS)
    assert s1.t == s2.t
    assert np.array_equal(s1.n, s2.n)
    assert np.array_equal(s1.x_t, s2.x_t)


def test_draw_sample_invariants():
    stream = RngStream(0)
    x = np.random.default_rng(6).normal(size=(1, 8, 8)) * 0.5
    for i in range(20):
        s = flowpath.draw_sample(x, ClassCondition(0), stream.child(i), MASKS)
        assert 0.0 <= s.t <= 1.0
        assert np.max(np.abs(s.x_t - ((1 - s.t) * s.x + s.t * s.n))) < 1e-9
        assert np.max(np.abs(s.v - (s.n - s.x))) < 1e-9


def test_draw_sample_band_sum_equal_sigmas():
    masks = spectral.make_masks(8, 8, 4.0, 4.0)
    x = np.random.default_rng(7).normal(size=(1, 8, 8)) * 0.5
    s = flowpath.draw_sample(x, ClassCondition(0), RngStream(1), masks)
    assert np.max(np.abs(s.v_low + s.v_high - s.v)) < 1e-7
    assert np.max(np.abs(s.x_t_low + s.x_t_high - s.x_t)) < 1e-7


def test_draw_sample_statistics():
    # Monte-Carlo oracle: t should be uniform, noise standard normal
    stream = RngStream(123)
    x = np.zeros((1, 2, 2))
    masks = spectral.make_masks(2, 2, 8.0, 2.0)
    count = 100_000
    t_sum = 0.0
    n_sum = np.zeros((1, 2, 2))
    n_sq = np.zeros((1, 2, 2))
    label = ClassCondition(0)
    for _ in range(count):
        s = flowpath.draw_sample(x, label, stream, masks)
        t_sum += s.t
        n_sum += s.n
        n_sq += s.n * s.n
    assert abs(t_sum / count - 0.5) < 0.01
    mean = n_sum / count
    var = n_sq / count - mean**2
    assert np.max(np.abs(mean)) < 0.02
    assert np.max(np.abs(var - 1.0)) < 0.05
