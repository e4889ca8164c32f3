import numpy as np
import pytest

from freqflow import sampling, spectral
from freqflow.errors import DimensionError, NumericError, ParameterError
from freqflow.flowpath import ClassCondition
from freqflow.model import ModelConfig, ModelParams, init_params, param_schema
from freqflow.rng import RngStream
from freqflow.sampling import SamplerConfig, Trajectory, TrajectoryPoint, cfg_velocity, integrate_euler, sample, sample_batch


CFG = ModelConfig(image_size=8, patch_size=4, freq_depth=1, freq_width=8,
                  spatial_depth=1, spatial_width=8, time_embed_dim=8, num_classes=4)
MASKS = spectral.make_masks(8, 8, 8.0, 2.0)


def stub_params(head_bias=0.0):
    tensors = {k: np.zeros(s, dtype=np.float32) for k, s in param_schema(CFG).items()}
    tensors["spatial.head.b"][:] = head_bias
    return ModelParams(CFG, tensors)


def noise_for(cfg_seed):
    shape = (CFG.image_channels, CFG.image_size, CFG.image_size)
    return RngStream(cfg_seed).child(0).normal(size=shape)


# -------------------------------------------------------------- cfg_velocity


def test_cfg_velocity_examples():
    g = np.random.default_rng(0)
    vc, vu = g.normal(size=(1, 4, 4)), g.normal(size=(1, 4, 4))
    assert np.array_equal(cfg_velocity(vc, vu, 1.0), vc)
    assert np.array_equal(cfg_velocity(vc, vc, 3.7), vc)
    assert cfg_velocity(np.array([3.0]), np.array([1.0]), 2.0)[0] == pytest.approx(5.0)
    with pytest.raises(DimensionError):
        cfg_velocity(np.zeros((1, 2, 2)), np.zeros((1, 4, 4)), 2.0)
    with pytest.raises(ParameterError):
        cfg_velocity(vc, vu, 0.5)


# ------------------------------------------------------------ integrate_euler


def test_constant_field_exact_any_steps():
    g = np.random.default_rng(1)
    x1 = g.normal(size=(1, 8, 8))
    v0 = g.normal(size=(1, 8, 8))
    for steps in (1, 7, 50):
        final, _ = integrate_euler(lambda x, t: (v0, 0.5), x1, steps)
        assert np.array_equal(final, x1 - v0), f"steps={steps}"


def test_zero_field_returns_noise():
    x1 = np.random.default_rng(2).normal(size=(1, 8, 8))
    final, _ = integrate_euler(lambda x, t: (np.zeros_like(x), 0.5), x1, 13)
    assert np.array_equal(final, x1)


def test_linear_field_matches_closed_form():
    x1 = np.random.default_rng(3).normal(size=(1, 8, 8))
    for steps in (10, 50):
        final, _ = integrate_euler(lambda x, t: (x, 0.5), x1, steps)
        expected = x1 * (1 - 1 / steps) ** steps
        assert np.max(np.abs(final - expected)) < 1e-9
    final50, _ = integrate_euler(lambda x, t: (x, 0.5), x1, 50)
    assert np.max(np.abs(final50 / x1 - 0.3642)) < 1e-3


def test_euler_first_order_convergence():
    x1 = np.random.default_rng(4).normal(size=(1, 4, 4))
    exact = x1 * np.exp(-1.0)

    def gap(steps):
        final, _ = integrate_euler(lambda x, t: (x, 0.5), x1, steps)
        return np.max(np.abs(final - exact))

    ratio = gap(80) / gap(40)
    assert 0.4 < ratio < 0.6


def test_nonfinite_state_aborts_with_step():
    x1 = np.ones((1, 4, 4))
    with np.errstate(over="ignore"), pytest.raises(NumericError, match="step 2"):
        integrate_euler(lambda x, t: (x * 1e200, 0.5), x1, 5)


# ----------------------------------------------------------------- capture


@pytest.mark.parametrize("steps,every", [(50, 10), (7, 3), (50, 1), (2, 2), (5, 4)])
def test_trajectory_length_invariant(steps, every):
    x1 = np.random.default_rng(5).normal(size=(1, 4, 4))
    _, captures = integrate_euler(lambda x, t: (x * 0.1, 0.5), x1, steps, capture_every=every)
    assert len(captures) == 1 + steps // every
    ts = [c[0] for c in captures]
    assert ts[0] == 1.0
    assert all(b < a for a, b in zip(ts, ts[1:]))


def test_capture_disabled():
    x1 = np.zeros((1, 4, 4))
    _, captures = integrate_euler(lambda x, t: (x1, 0.5), x1, 5, capture_every=0)
    assert captures == []


def test_capture_omega_times_are_consistent():
    # the recorded omega is evaluated at exactly the captured (x, t)
    seen = []

    def fn(x, t):
        seen.append((t, x.copy()))
        return np.zeros_like(x), t  # use omega slot to echo the eval time

    x1 = np.random.default_rng(6).normal(size=(1, 4, 4))
    _, captures = integrate_euler(fn, x1, 4, capture_every=2)
    for t, x, om in captures:
        assert om == t


# ------------------------------------------------------------------- sample


def test_sample_constant_stub_model():
    params = stub_params(head_bias=0.75)
    for steps in (1, 7, 50):
        cfg = SamplerConfig(steps=steps, seed=11)
        img, _ = sample(params, ClassCondition(0), cfg, MASKS)
        expected = noise_for(11) - np.float64(np.float32(0.75))
        assert np.array_equal(img, expected), f"steps={steps}"


def test_sample_deterministic():
    params = init_params(CFG, RngStream(1), zero_heads=False)
    cfg = SamplerConfig(steps=5, seed=3, capture_every=1)
    a, ta = sample(params, ClassCondition(2), cfg, MASKS)
    b, tb = sample(params, ClassCondition(2), cfg, MASKS)
    assert np.array_equal(a, b)
    assert all(np.array_equal(pa.x_t, pb.x_t) and pa.mean_omega == pb.mean_omega
               for pa, pb in zip(ta, tb))


def test_sample_batch_matches_singles():
    params = init_params(CFG, RngStream(2), zero_heads=False)
    cfg = SamplerConfig(steps=4, seed=9)
    imgs, _ = sample_batch(params, [ClassCondition(0), ClassCondition(3)], cfg, MASKS)
    # noise for element i comes from stream (seed, i) regardless of batching
    root = RngStream(9)
    assert imgs.shape == (2, 1, 8, 8)
    n0 = root.child(0).normal(size=(1, 8, 8))
    n1 = root.child(1).normal(size=(1, 8, 8))
    assert not np.array_equal(n0, n1)


def test_cfg_scale_noop_for_label_blind_model():
    # stub ignores the label, so guidance at any scale changes nothing
    params = stub_params(head_bias=0.3)
    plain = sample(params, ClassCondition(1), SamplerConfig(steps=3, seed=5), MASKS)[0]
    guided = sample(params, ClassCondition(1), SamplerConfig(steps=3, seed=5, cfg_scale=2.5), MASKS)[0]
    assert np.max(np.abs(plain - guided)) < 1e-12


def test_zero_gate_stub_has_half_omega():
    params = stub_params()
    _, traj = sample(params, ClassCondition(0), SamplerConfig(steps=4, seed=1, capture_every=1), MASKS)
    assert len(traj) == 5
    assert all(p.mean_omega == pytest.approx(0.5) for p in traj)


def test_trajectory_validation_and_csv(tmp_path):
    with pytest.raises(ParameterError):
        Trajectory([TrajectoryPoint(0.5, np.zeros((1, 2, 2)), 0.5)])
    tr = Trajectory([TrajectoryPoint(1.0, np.zeros((1, 2, 2)), 0.5),
                     TrajectoryPoint(0.4, np.zeros((1, 2, 2)), 0.25)])
    assert tr.points[1].step1000 == 400
    path = tmp_path / "traj.csv"
    sampling.write_trajectory_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,step1000,mean_omega"
    assert lines[1] == "1,1000,0.5"
    assert lines[2] == "0.4,400,0.25"
