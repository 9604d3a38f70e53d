import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcfeedback import (ConfigurationError, HardwareModel, NoiseSource, ReservoirConfig,
                        ReservoirState, autonomous_run, drive, make_mask, readout, step)


def test_mask_prefix_is_zero():
    m = make_mask(3, 100, 23)
    assert np.all(m[:23] == 0)
    assert np.all(np.abs(m[23:]) <= 1) and np.count_nonzero(m[23:]) == 77


def test_mask_deterministic_and_centred():
    assert np.array_equal(make_mask(7), make_mask(7))
    assert not np.array_equal(make_mask(7), make_mask(8))
    big = make_mask(1, 200000, 0)
    assert np.all(np.abs(big) <= 1)
    assert abs(big.mean()) < 4 * math.sqrt(1 / 3 / big.size)


def test_mask_prefix_too_long():
    with pytest.raises(ConfigurationError):
        make_mask(0, 10, 10)


def test_config_invariants():
    with pytest.raises(ConfigurationError):
        ReservoirConfig(alpha=0.5, beta=1.0, mask=np.array([0.1]), latency_prefix=0)
    with pytest.raises(ConfigurationError):
        ReservoirConfig(alpha=0.5, beta=1.0, mask=np.array([0.1, 1.5]), latency_prefix=0)
    with pytest.raises(ConfigurationError):
        ReservoirConfig(alpha=0.5, beta=1.0, mask=np.array([0.1, 0.5]), latency_prefix=1)
    with pytest.raises(ConfigurationError):
        ReservoirConfig(alpha=float("nan"), beta=1.0, mask=np.zeros(4), latency_prefix=0)
    c = ReservoirConfig.random(0, 0.9, 0.3)
    assert c.n_neurons == 100 and c.latency_prefix == 23


def test_step_zero_fixed_point(small_config):
    s = step(ReservoirState.zeros(3), 0.0, small_config)
    assert np.all(s.x == 0)


def test_step_saturates_at_pi_over_two():
    mask = np.array([0.0, 0.5, -0.25])
    cfg = ReservoirConfig(alpha=0.0, beta=math.pi, mask=mask, latency_prefix=1)
    s = step(ReservoirState.zeros(3), 1.0, cfg)
    assert s.x[1] == pytest.approx(1.0, abs=1e-15)


def test_step_hand_example(small_config):
    s = step(ReservoirState.zeros(3), 1.0, small_config)
    np.testing.assert_allclose(s.x, np.sin([0.2, -0.4, 0.6]), rtol=0, atol=1e-15)
    assert s.x_last_prev == 0.0


def test_step_ring_indices(small_config):
    # second step by hand: x0 uses the carried x_{N-1}(n-1)
    s1 = step(ReservoirState.zeros(3), 1.0, small_config)
    s2 = step(s1, 0.5, small_config)
    m, a, b = small_config.mask, 0.5, 1.0
    want = np.sin([a * 0.0 + b * m[0] * 0.5,
                   a * s1.x[0] + b * m[1] * 0.5,
                   a * s1.x[1] + b * m[2] * 0.5])
    np.testing.assert_allclose(s2.x, want, atol=1e-15)
    assert s2.x_last_prev == s1.x[2]
    s3 = step(s2, 0.0, small_config)
    assert s3.x[0] == pytest.approx(math.sin(a * s1.x[2]))


def test_step_rejects_nonfinite(small_config):
    with pytest.raises(ValueError):
        step(ReservoirState.zeros(3), float("inf"), small_config)
    with pytest.raises(ValueError):
        step(ReservoirState.zeros(4), 0.0, small_config)


def test_drive_shapes_and_zero(small_config):
    traj, _ = drive(small_config, np.zeros(50))
    assert traj.states.shape == (50, 3) and np.all(traj.states == 0)
    traj, _ = drive(small_config, [0.3])
    assert len(traj) == 1
    traj, final = drive(small_config, [])
    assert traj.states.shape == (0, 3) and np.all(final.x == 0)
    with pytest.raises(ValueError):
        drive(small_config, [0.1, float("nan")])


def test_drive_constant_input_without_coupling():
    cfg = ReservoirConfig.random(4, 0.0, 0.8, n_neurons=20, latency_prefix=3)
    traj, _ = drive(cfg, np.full(30, 0.7))
    want = np.sin(0.8 * cfg.mask * 0.7)
    np.testing.assert_array_equal(traj.states, np.tile(want, (30, 1)))


def test_step_matches_drive(small_config):
    u = np.sin(0.3 * np.arange(40))
    traj, final = drive(small_config, u)
    s = ReservoirState.zeros(3)
    for k, v in enumerate(u):
        s = step(s, v, small_config)
        np.testing.assert_array_equal(s.x, traj.states[k])
    np.testing.assert_array_equal(s.x, final.x)


def test_step_matches_drive_with_hardware():
    cfg = ReservoirConfig.random(2, 0.9, 0.5, n_neurons=12, latency_prefix=2)
    hw = HardwareModel.experimental(2e-3, highpass_cutoff=1e-2)
    u = 0.8 * np.sin(0.2 * np.arange(60))
    traj, final = drive(cfg, u, hw, noise=11)
    s, src = ReservoirState.zeros(12), NoiseSource(11)
    for k, v in enumerate(u):
        s = step(s, v, cfg, hw, src)
        np.testing.assert_allclose(s.acquired, traj.states[k], rtol=0, atol=1e-14)
    assert s.hp_y == pytest.approx(final.hp_y, abs=1e-14)


def test_drive_resumes_from_state():
    cfg = ReservoirConfig.random(5, 0.8, 0.7, n_neurons=15, latency_prefix=0)
    u = np.cos(0.4 * np.arange(80))
    whole, _ = drive(cfg, u)
    first, mid = drive(cfg, u[:33])
    second, _ = drive(cfg, u[33:], state=mid)
    np.testing.assert_array_equal(np.vstack([first.states, second.states]), whole.states)


def test_readout_examples():
    x = np.array([1.0, -1.0, 0.5])
    assert readout(x, np.zeros(3)) == 0
    assert readout(x, np.array([0, 0, 1.0])) == 0.5
    assert readout(x, np.array([0.1, 0.2, 0.3])) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(ValueError):
        readout(x, np.zeros(2))


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_readout_linear(x, a, b, seed):
    rng = np.random.default_rng(seed)
    w1, w2 = rng.normal(size=4), rng.normal(size=4)
    x = np.array(x)
    assert readout(x, a * w1 + b * w2) == pytest.approx(
        a * readout(x, w1) + b * readout(x, w2), abs=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
       st.floats(-5, 5), st.floats(-20, 20), st.integers(0, 50))
@settings(max_examples=40, deadline=None)
def test_states_bounded(u, alpha, beta, seed):
    cfg = ReservoirConfig.random(seed, alpha, beta, n_neurons=8, latency_prefix=1)
    traj, _ = drive(cfg, u)
    assert np.all(np.abs(traj.states) <= 1.0)


def test_deterministic():
    cfg = ReservoirConfig.random(9, 0.9, 0.4)
    u = np.random.default_rng(0).uniform(-1, 1, 500)
    hw = HardwareModel.experimental(1e-3)
    a, _ = drive(cfg, u, hw, noise=3)
    b, _ = drive(cfg, u, hw, noise=3)
    assert np.array_equal(a.states, b.states)


def test_ring_footprint():
    # perturb one neuron and see which neurons move one and two steps later
    n = 6
    cfg = ReservoirConfig(alpha=0.7, beta=0.9, mask=np.linspace(-0.5, 0.5, n), latency_prefix=0)
    base = ReservoirState(x=np.full(n, 0.1), x_last_prev=0.2)
    for j in range(n):
        pert = base.copy()
        pert.x[j] += 1e-3
        a, b = step(base, 0.3, cfg), step(pert, 0.3, cfg)
        moved = np.flatnonzero(a.x != b.x)
        if j < n - 1:
            assert list(moved) == [j + 1]
        else:
            assert list(moved) == []
            # x_{N-1}(n) reaches neuron 0 one step later
            a2, b2 = step(a, 0.3, cfg), step(b, 0.3, cfg)
            assert a2.x[0] != b2.x[0]
    pert = base.copy()
    pert.x_last_prev += 1e-3
    assert list(np.flatnonzero(step(base, 0.3, cfg).x != step(pert, 0.3, cfg).x)) == [0]


def test_memoryless_without_coupling():
    cfg = ReservoirConfig.random(1, 0.0, 1.3, n_neurons=5, latency_prefix=0)
    rng = np.random.default_rng(2)
    u = rng.uniform(-1, 1, 40)
    traj, _ = drive(cfg, u)
    for n in range(40):
        np.testing.assert_array_equal(traj.states[n], np.sin(1.3 * cfg.mask * u[n]))


def test_autonomous_zero_weights():
    cfg = ReservoirConfig.random(0, 0.9, 0.3)
    run = autonomous_run(cfg, np.zeros(100), np.sin(0.1 * np.arange(128)), 10000)
    assert run.outputs.shape == (10000,)
    assert np.all(run.outputs == 0) and not run.diverged
    assert np.abs(run.trajectory.states[-1]).max() < 1e-12


def test_autonomous_feeds_back_readout():
    cfg = ReservoirConfig.random(0, 0.7, 0.5, n_neurons=10, latency_prefix=2)
    w = np.random.default_rng(1).normal(scale=0.1, size=10)
    warm = np.sin(0.2 * np.arange(20))
    run = autonomous_run(cfg, w, warm, 15)
    np.testing.assert_array_equal(run.trajectory.inputs[:20], warm)
    np.testing.assert_allclose(run.trajectory.inputs[20:], run.outputs[:-1], atol=0)
    np.testing.assert_allclose(run.outputs, run.trajectory.states[19:] @ w, atol=1e-15)


def test_autonomous_divergence_flag():
    cfg = ReservoirConfig.random(0, 0.7, 0.5, n_neurons=10, latency_prefix=2)
    run = autonomous_run(cfg, np.full(10, 1e7), np.ones(5), 100)
    assert run.diverged and run.n_completed < 100
    assert np.isnan(run.outputs[-1])
    run = autonomous_run(cfg, np.full(10, 0.5), np.ones(5), 100, blowup=0.1)
    assert run.diverged


def test_autonomous_rejects_bad_args():
    cfg = ReservoirConfig.random(0, 0.7, 0.5, n_neurons=10, latency_prefix=2)
    with pytest.raises(ValueError):
        autonomous_run(cfg, np.zeros(10), [], 10)
    with pytest.raises(ValueError):
        autonomous_run(cfg, np.zeros(9), [0.1], 10)
