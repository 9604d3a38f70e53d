"""Ring-topology sine reservoir with a linear readout and output feedback."""
from dataclasses import dataclass, field
import math

import numpy as np

from rcfeedback import kernels
from rcfeedback.hardware import HardwareModel, quantize, quantize_weights

DEFAULT_WARMUP = 128
DEFAULT_BLOWUP = 1e6
ROUNDTRIP_TIME = 7.93e-6


class ConfigurationError(ValueError):
    pass


def make_mask(seed, n_neurons=100, latency_prefix=23):
    """Uniform input mask on [-1, 1] with the first ``latency_prefix`` entries zeroed."""
    if not 0 <= latency_prefix < n_neurons:
        raise ConfigurationError(
            f"latency_prefix must lie in [0, {n_neurons}), got {latency_prefix}")
    mask = np.random.default_rng(seed).uniform(-1.0, 1.0, n_neurons)
    mask[:latency_prefix] = 0.0
    return mask


@dataclass(frozen=True, eq=False)
class ReservoirConfig:
    alpha: float
    beta: float
    mask: np.ndarray
    latency_prefix: int = 23
    roundtrip_time: float = ROUNDTRIP_TIME
    n_neurons: int = field(init=False)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=float)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "n_neurons", mask.shape[0])
        if mask.ndim != 1 or mask.shape[0] < 2:
            raise ConfigurationError("mask must be a vector of at least 2 entries")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ConfigurationError("alpha and beta must be finite")
        if not 0 <= self.latency_prefix < mask.shape[0]:
            raise ConfigurationError("latency_prefix must be smaller than n_neurons")
        if np.any(np.abs(mask) > 1.0) or not np.all(np.isfinite(mask)):
            raise ConfigurationError("mask entries must lie in [-1, 1]")
        if np.any(mask[:self.latency_prefix] != 0.0):
            raise ConfigurationError("mask entries inside the latency prefix must be 0")
        if not self.roundtrip_time > 0:
            raise ConfigurationError("roundtrip_time must be > 0")

    @classmethod
    def random(cls, seed, alpha, beta, n_neurons=100, latency_prefix=23, **kw):
        return cls(alpha=alpha, beta=beta,
                   mask=make_mask(seed, n_neurons, latency_prefix),
                   latency_prefix=latency_prefix, **kw)


@dataclass
class ReservoirState:
    """Loop state at one time step.

    ``x`` holds the optical loop values, ``acquired`` what the ADC chain
    delivered for the same step (equal to ``x`` on the ideal path).
    ``x_last_prev`` is the last neuron of the previous step, which feeds
    neuron 0 through the extra delay that closes the ring.
    """

    x: np.ndarray
    x_last_prev: float = 0.0
    acquired: np.ndarray | None = None
    hp_u: float = 0.0
    hp_y: float = 0.0

    @classmethod
    def zeros(cls, n_neurons):
        return cls(x=np.zeros(n_neurons), acquired=np.zeros(n_neurons))

    def copy(self):
        return ReservoirState(self.x.copy(), self.x_last_prev,
                              None if self.acquired is None else self.acquired.copy(),
                              self.hp_u, self.hp_y)


@dataclass
class StateTrajectory:
    states: np.ndarray
    inputs: np.ndarray

    def __len__(self):
        return self.states.shape[0]


@dataclass
class AutonomousRun:
    outputs: np.ndarray
    trajectory: StateTrajectory
    diverged: bool
    n_completed: int
    clipped_weights: int = 0


class NoiseSource:
    """Independent counter-based streams for acquisition and drive noise."""

    def __init__(self, seed):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        acq, drv = seed.spawn(2)
        self._acq = np.random.Generator(np.random.Philox(acq))
        self._drv = np.random.Generator(np.random.Philox(drv))

    def acquisition(self, shape):
        return self._acq.standard_normal(shape)

    def drive(self, shape):
        return self._drv.standard_normal(shape)


def _noise_arrays(hw, noise, n_steps, n_neurons):
    acq = np.zeros((0, n_neurons))
    drv = np.zeros(0)
    if hw is None:
        return acq, drv
    if hw.acq_sigma > 0 or hw.drive_sigma > 0:
        if noise is None:
            raise ValueError("a noise seed is required when hardware noise is enabled")
        if not isinstance(noise, NoiseSource):
            noise = NoiseSource(noise)
        if hw.acq_sigma > 0:
            acq = hw.acq_sigma * noise.acquisition((n_steps, n_neurons))
        if hw.drive_sigma > 0:
            drv = hw.drive_sigma * noise.drive(n_steps)
    return acq, drv


def _hw_scalars(hw):
    if hw is None:
        return 0, 0, 1.0, 0.0
    return (hw.adc_bits if hw.adc else 0, hw.dac_bits if hw.dac else 0,
            float(hw.effective_gain), hw.highpass_coefficient)


def _check_inputs(u):
    u = np.ascontiguousarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("input series must be one-dimensional")
    if not np.all(np.isfinite(u)):
        raise ValueError("input series must be finite")
    return u


def step(state, u, config, hw=None, rng=None):
    """Advance the reservoir by one time step with input ``u``.

    Follows the same effect order as the bulk kernels. ``rng`` supplies the
    hardware noise: a :class:`NoiseSource` reproduces :func:`drive` exactly,
    a plain ``numpy.random.Generator`` draws the drive sample first.
    """
    if not math.isfinite(u):
        raise ValueError("input must be finite")
    if state.x.shape[0] != config.n_neurons:
        raise ValueError("state size does not match the configuration")
    adc_bits, dac_bits, gain, hp_a = _hw_scalars(hw)
    if dac_bits:
        u = quantize(u, dac_bits)
    if hw is not None and hw.drive_sigma > 0:
        draw = rng.drive(1)[0] if isinstance(rng, NoiseSource) else rng.standard_normal()
        u = u + hw.drive_sigma * draw

    fb = np.empty(config.n_neurons)
    fb[0] = config.alpha * state.x_last_prev
    fb[1:] = config.alpha * state.x[:-1]
    hp_u, hp_y = state.hp_u, state.hp_y
    if hp_a > 0:
        fb, hp_u, hp_y = kernels._highpass_block(fb, hp_a, hp_u, hp_y)
    x = np.sin(fb + config.beta * config.mask * u)

    r = x.copy()
    if hw is not None and hw.acq_sigma > 0:
        draw = (rng.acquisition(config.n_neurons) if isinstance(rng, NoiseSource)
                else rng.standard_normal(config.n_neurons))
        r = r + hw.acq_sigma * draw
    if adc_bits:
        r = quantize(r, adc_bits)
    if gain != 1.0:
        r = r * gain
    return ReservoirState(x=x, x_last_prev=float(state.x[-1]), acquired=r,
                          hp_u=hp_u, hp_y=hp_y)


def drive(config, inputs, hw=None, noise=None, state=None):
    """Teacher-forced run: one step per input value, acquired states recorded.

    Returns the trajectory and the final state. ``noise`` is a seed or
    :class:`NoiseSource`, needed only when ``hw`` injects noise.
    """
    u = _check_inputs(inputs)
    n = config.n_neurons
    if u.shape[0] == 0:
        return StateTrajectory(np.zeros((0, n)), np.zeros(0)), (
            state.copy() if state is not None else ReservoirState.zeros(n))
    state = state if state is not None else ReservoirState.zeros(n)
    acq, drv = _noise_arrays(hw, noise, u.shape[0], n)
    adc_bits, dac_bits, gain, hp_a = _hw_scalars(hw)
    rec, applied, _, _, x, x_last, hp_u, hp_y = kernels.simulate(
        float(config.alpha), float(config.beta), config.mask, u, 0, np.zeros(n),
        acq, drv, adc_bits, dac_bits, gain, hp_a, DEFAULT_BLOWUP,
        state.x.copy(), float(state.x_last_prev), float(state.hp_u), float(state.hp_y))
    final = ReservoirState(x=np.asarray(x).copy(), x_last_prev=float(x_last),
                           acquired=rec[-1].copy(), hp_u=float(hp_u), hp_y=float(hp_y))
    return StateTrajectory(rec, applied), final


def readout(state, weights):
    """Linear readout ``sum_i w_i x_i`` of an acquired state (or a raw vector)."""
    x = state.acquired if isinstance(state, ReservoirState) else state
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"state has {x.shape[-1]} neurons, weights {w.shape[0]}")
    return x @ w


def effective_weights(weights, hw=None):
    """Weights as the readout hardware holds them, plus the clip count."""
    w = np.ascontiguousarray(weights, dtype=float)
    if hw is not None and hw.fixed_point_weights:
        fp = quantize_weights(w, hw.weight_bits)
        return fp.values, fp.clipped
    return w, 0


def autonomous_run(config, weights, warmup, n_steps, hw=None, noise=None,
                   blowup=DEFAULT_BLOWUP):
    """Teacher-forced warmup, then closed-loop generation.

    Starting from the zero state the reservoir is driven with ``warmup``.
    Then ``n_steps`` outputs are produced: each is the readout of the latest
    acquired state and becomes the input of the next step, so ``outputs[k]``
    is the continuation of the warmup series at index ``len(warmup) + k``.
    A run whose output magnitude exceeds ``blowup`` stops early and is
    flagged as diverged; missing outputs are NaN.
    """
    u = _check_inputs(warmup)
    if u.shape[0] == 0:
        raise ValueError("warmup series must be non-empty")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    n = config.n_neurons
    w, clipped = effective_weights(weights, hw)
    if w.shape[0] != n:
        raise ValueError("weights do not match the reservoir size")
    total = u.shape[0] + n_steps - 1
    acq, drv = _noise_arrays(hw, noise, total, n)
    adc_bits, dac_bits, gain, hp_a = _hw_scalars(hw)
    rec, applied, outputs, done, *_ = kernels.simulate(
        float(config.alpha), float(config.beta), config.mask, u, int(n_steps), w,
        acq, drv, adc_bits, dac_bits, gain, hp_a, float(blowup),
        np.zeros(n), 0.0, 0.0, 0.0)
    n_out = done - u.shape[0] + 1
    diverged = bool(n_out < n_steps or not abs(outputs[n_steps - 1]) <= blowup)
    return AutonomousRun(outputs=outputs, trajectory=StateTrajectory(rec, applied),
                         diverged=diverged, n_completed=max(n_out, 0),
                         clipped_weights=clipped)
