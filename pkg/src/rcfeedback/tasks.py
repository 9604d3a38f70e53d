"""Generation tasks: teachers and success metrics."""
from dataclasses import dataclass
import math

import numpy as np

FREQ_THRESHOLD = 1e-3
PATTERN_THRESHOLD = 1e-3


@dataclass(frozen=True)
class FrequencyTask:
    nu: float
    threshold: float = FREQ_THRESHOLD
    amplitude_tol: float = 0.1

    def __post_init__(self):
        if not 0 < self.nu <= math.pi:
            raise ValueError(f"nu must lie in (0, pi], got {self.nu}")


@dataclass(frozen=True, eq=False)
class PatternTask:
    pattern: np.ndarray
    threshold: float = PATTERN_THRESHOLD

    def __post_init__(self):
        p = np.asarray(self.pattern, dtype=float)
        object.__setattr__(self, "pattern", p)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("pattern must be a non-empty vector")
        if np.any(np.abs(p) > 0.5):
            raise ValueError("pattern values must lie in [-0.5, 0.5]")

    @property
    def length(self):
        return self.pattern.shape[0]


@dataclass
class TaskOutcome:
    success: bool
    error_value: float
    diverged: bool = False


def sine_teacher(nu, length):
    if not 0 < nu <= math.pi:
        raise ValueError(f"nu must lie in (0, pi], got {nu}")
    return np.sin(nu * np.arange(length))


def physical_frequency(nu, roundtrip_time):
    """Frequency in hertz of a relative frequency ``nu`` (radians per step)."""
    if not roundtrip_time > 0:
        raise ValueError("roundtrip_time must be > 0")
    return nu / (2.0 * math.pi * roundtrip_time)


def random_pattern(seed, length):
    if length < 1:
        raise ValueError("pattern length must be >= 1")
    return PatternTask(np.random.default_rng(seed).uniform(-0.5, 0.5, length))


def periodic_teacher(pattern, length, offset=0):
    p = pattern.pattern if isinstance(pattern, PatternTask) else np.asarray(pattern, float)
    return p[(np.arange(length) + offset) % p.shape[0]]


def estimate_frequency(series):
    """Dominant angular frequency (radians per step) of a real series.

    Rectangular window over the whole series; the magnitude spectrum is
    refined around its largest bin with a three-point parabola.
    """
    s = np.asarray(series, dtype=float)
    if s.shape[0] < 64:
        raise ValueError("need at least 64 samples")
    if not np.all(np.isfinite(s)):
        raise ValueError("series must be finite")
    mag = np.abs(np.fft.rfft(s))
    k = int(np.argmax(mag))
    if mag[k] == 0.0:
        raise ValueError("no dominant frequency in an all-zero series")
    shift = 0.0
    if 0 < k < mag.shape[0] - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2.0 * b + c
        if denom != 0.0:
            shift = 0.5 * (a - c) / denom
    return float(np.clip(2.0 * math.pi * (k + shift) / s.shape[0], 0.0, math.pi))


def output_amplitude(series):
    """Sine amplitude implied by the RMS: ``sqrt(2) * rms``."""
    s = np.asarray(series, dtype=float)
    return float(math.sqrt(2.0 * np.mean(s * s)))


def evaluate_frequency_run(outputs, task, diverged=False):
    """Frequency error against ``task.nu``, gated by amplitude and divergence."""
    y = np.asarray(outputs, dtype=float)
    if diverged or not np.all(np.isfinite(y)):
        return TaskOutcome(False, float("inf"), True)
    try:
        err = abs(estimate_frequency(y) - task.nu)
    except ValueError:
        return TaskOutcome(False, float("inf"), False)
    amp_ok = abs(output_amplitude(y) - 1.0) <= task.amplitude_tol
    return TaskOutcome(bool(err < task.threshold and amp_ok), float(err), False)


def windowed_nmse(outputs, target, window):
    """NMSE over a causal sliding window; element ``j`` covers samples j .. j+window-1."""
    y = np.asarray(outputs, dtype=float)
    d = np.asarray(target, dtype=float)
    if y.shape != d.shape:
        raise ValueError("outputs and target must have the same length")
    if window < 2 or window > y.shape[0]:
        return np.zeros(0)

    def sums(v):
        return np.concatenate(([0.0], np.cumsum(v)))

    # cumulative sums of errors are exact enough here; the target moments are
    # recomputed per window from centred values to avoid cancellation
    se = sums((y - d) ** 2)
    num = (se[window:] - se[:-window]) / window
    view = np.lib.stride_tricks.sliding_window_view(d, window)
    var = view.var(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / var
    return np.where(var > 0, out, np.inf)


def pattern_window(length):
    return max(3 * length, 60)


def evaluate_pattern_run(outputs, pattern, window=None, offset=0, skip=None,
                         threshold=PATTERN_THRESHOLD, diverged=False):
    """Windowed NMSE of a closed-loop run against the periodic pattern.

    ``offset`` is the pattern phase of ``outputs[0]`` (the warmup length when
    the warmup was the same periodic series). The first ``skip`` outputs,
    2 L by default, are excluded as the re-locking transient. Success means
    the largest windowed NMSE stays below ``threshold``.
    """
    p = pattern.pattern if isinstance(pattern, PatternTask) else np.asarray(pattern, float)
    L = p.shape[0]
    window = pattern_window(L) if window is None else window
    skip = 2 * L if skip is None else skip
    y = np.asarray(outputs, dtype=float)
    target = periodic_teacher(p, y.shape[0], offset)
    if diverged or not np.all(np.isfinite(y)):
        return np.full(max(y.shape[0] - skip - window + 1, 0), np.inf), \
            TaskOutcome(False, float("inf"), True)
    series = windowed_nmse(y[skip:], target[skip:], window)
    if series.size == 0:
        return series, TaskOutcome(False, float("inf"), False)
    worst = float(np.max(series))
    return series, TaskOutcome(bool(worst < threshold), worst, False)
