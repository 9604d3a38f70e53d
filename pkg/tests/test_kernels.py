import numpy as np
import pytest

from rcfeedback import HardwareModel, ReservoirConfig, autonomous_run, drive, train
from rcfeedback import _backend, kernels
from rcfeedback.tasks import periodic_teacher, random_pattern


def _run(hw, seed=3):
    cfg = ReservoirConfig.random(seed, 0.9, 0.6)
    pat = random_pattern(seed, 9)
    sol = train(cfg, periodic_teacher(pat, 600), hw=hw, seed=seed, jitter=1e-4)
    run = autonomous_run(cfg, sol.weights, periodic_teacher(pat, 128), 800, hw=hw, noise=seed)
    return sol.weights, run


def test_backend_flag(monkeypatch):
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "0")
    assert not _backend.numba_enabled()
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "off")
    assert not _backend.numba_enabled()
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "1")
    assert _backend.numba_enabled() == _backend.HAVE_NUMBA


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("hw", [
    HardwareModel.ideal(),
    HardwareModel(noise_sigma=1e-3, highpass=False),
    HardwareModel(noise_sigma=1e-3, drive_noise_sigma=None, highpass=False),
])
def test_backends_agree(monkeypatch, hw):
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "1")
    w1, r1 = _run(hw)
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "0")
    w2, r2 = _run(hw)
    np.testing.assert_allclose(w1, w2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(r1.outputs, r2.outputs, rtol=1e-7, atol=1e-9)


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_with_highpass(monkeypatch):
    cfg = ReservoirConfig.random(1, 0.9, 0.5)
    hw = HardwareModel(noise_sigma=1e-3, highpass_cutoff=1e-3)
    u = np.sin(0.3 * np.arange(400))
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "1")
    a, fa = drive(cfg, u, hw, noise=2)
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "0")
    b, fb = drive(cfg, u, hw, noise=2)
    np.testing.assert_allclose(a.states, b.states, atol=1e-12)
    assert fa.hp_y == pytest.approx(fb.hp_y, abs=1e-12)


def test_each_backend_deterministic(numpy_backend):
    hw = HardwareModel(noise_sigma=1e-3, highpass=False)
    w1, r1 = _run(hw)
    w2, r2 = _run(hw)
    assert np.array_equal(w1, w2) and np.array_equal(r1.outputs, r2.outputs)


def test_quantize_scalar_matches_vector():
    from rcfeedback.hardware import quantize
    for v in np.linspace(-1.3, 1.3, 257):
        assert kernels.quantize_scalar(v, 14, -1.0, 1.0) == quantize(v, 14)
