"""Imperfections of the opto-electronic setup.

Everything here is a pure function of its inputs except :class:`HighPassFilter`,
which carries per-run state. The reservoir kernels apply the same effects
in bulk; the functions below are the reference definitions and are what the
tests pin down.
"""
from dataclasses import asdict, dataclass, replace
import math

import numpy as np

FULL_SCALE = (-1.0, 1.0)


@dataclass(frozen=True)
class HardwareModel:
    """Noise, converter and gain parameters of the physical loop.

    ``noise_sigma`` is the standard deviation of the additive Gaussian noise
    on every acquired neuron value, in units where normal operation spans
    roughly [-1, 1]. ``drive_noise_sigma`` optionally adds white noise to
    the scalar drive signal as well; ``None`` ties it to ``noise_sigma``.

    Each effect has its own switch so that any subset can be toggled off.
    """

    noise_sigma: float = 0.0
    drive_noise_sigma: float | None = 0.0
    adc_bits: int = 14
    dac_bits: int = 16
    weight_bits: int = 25
    state_gain: float = 8.0
    highpass_cutoff: float = 1e-4
    noise: bool = True
    adc: bool = True
    dac: bool = True
    fixed_point_weights: bool = True
    gain: bool = True
    highpass: bool = True

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.drive_noise_sigma is not None and not self.drive_noise_sigma >= 0:
            raise ValueError("drive_noise_sigma must be >= 0")
        for name in ("adc_bits", "dac_bits", "weight_bits"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if not self.state_gain > 0:
            raise ValueError("state_gain must be > 0")
        if not 0 <= self.highpass_cutoff < 0.5:
            raise ValueError("highpass_cutoff must lie in [0, 0.5)")

    @classmethod
    def ideal(cls):
        """All effects disabled: composes to the noiseless reservoir."""
        return cls(noise=False, adc=False, dac=False, fixed_point_weights=False,
                   gain=False, highpass=False)

    @classmethod
    def experimental(cls, noise_sigma=2e-3, **overrides):
        return cls(noise_sigma=noise_sigma, **overrides)

    def with_noise(self, sigma):
        return replace(self, noise_sigma=float(sigma))

    # effective values seen by the kernels
    @property
    def acq_sigma(self):
        return self.noise_sigma if self.noise else 0.0

    @property
    def drive_sigma(self):
        if not self.noise:
            return 0.0
        return self.noise_sigma if self.drive_noise_sigma is None else self.drive_noise_sigma

    @property
    def effective_gain(self):
        return self.state_gain if self.gain else 1.0

    @property
    def highpass_coefficient(self):
        """Pole ``a`` of the filter, 0 when the filter is off."""
        if not self.highpass or self.highpass_cutoff == 0:
            return 0.0
        return math.exp(-2.0 * math.pi * self.highpass_cutoff)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class FixedPointWeights:
    q: np.ndarray
    scale: float
    clipped: int = 0

    @property
    def values(self):
        return self.q.astype(float) * self.scale


def add_state_noise(state, sigma, rng):
    """Add i.i.d. N(0, sigma^2) to every neuron value."""
    state = np.asarray(state, dtype=float)
    if sigma == 0:
        return state.copy()
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return state + sigma * rng.standard_normal(state.shape)


def quantize(value, bits, full_scale_range=FULL_SCALE):
    """Round to the nearest of ``2**bits`` evenly spaced levels.

    The levels are ``lo + k * (hi - lo) / 2**bits`` for ``k = 0 .. 2**bits - 1``,
    so ``hi`` itself is not representable. Out-of-range values saturate.
    """
    if bits < 2:
        raise ValueError("bits must be >= 2")
    lo, hi = full_scale_range
    step = (hi - lo) / 2.0**bits
    k = np.clip(np.floor((np.asarray(value, dtype=float) - lo) / step + 0.5),
                0.0, 2.0**bits - 1.0)
    out = lo + k * step
    return float(out) if np.ndim(out) == 0 else out


def quantize_weights(w, bits=25):
    """Two's-complement fixed point with one sign bit and ``bits - 1`` fraction bits.

    Weights outside ]-1, 1[ are clipped to the largest representable
    magnitude and counted in ``clipped``.
    """
    w = np.asarray(w, dtype=float)
    scale = 2.0 ** -(bits - 1)
    qmax = 2 ** (bits - 1) - 1
    q = np.rint(w / scale)
    clipped = int(np.count_nonzero(np.abs(q) > qmax))
    q = np.clip(q, -qmax, qmax).astype(np.int64)
    return FixedPointWeights(q=q, scale=scale, clipped=clipped)


def apply_state_gain(state, gain=8.0):
    return np.asarray(state, dtype=float) * gain


class HighPassFilter:
    """Single-pole AC coupling, ``y_k = a (y_{k-1} + u_k - u_{k-1})``.

    ``cutoff`` is in cycles per sample; ``a = exp(-2 pi cutoff)``. State starts
    at zero and persists across calls.
    """

    def __init__(self, cutoff):
        self.a = math.exp(-2.0 * math.pi * cutoff)
        self.u_prev = 0.0
        self.y_prev = 0.0

    def __call__(self, samples):
        samples = np.asarray(samples, dtype=float)
        out = np.empty_like(samples)
        a, u_prev, y_prev = self.a, self.u_prev, self.y_prev
        for k, u in enumerate(samples):
            y_prev = a * (y_prev + (u - u_prev))
            u_prev = u
            out[k] = y_prev
        self.u_prev, self.y_prev = u_prev, y_prev
        return out


def highpass(samples, cutoff):
    return HighPassFilter(cutoff)(samples)
