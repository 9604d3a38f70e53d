"""Offline readout training: harvest teacher-forced states, ridge-solve, score."""
from dataclasses import dataclass

import numpy as np

from rcfeedback.reservoir import drive

DEFAULT_LAMBDA = 1e-6
DEFAULT_WASHOUT = 100


class TrainingError(ValueError):
    pass


@dataclass
class TrainingSet:
    design: np.ndarray
    targets: np.ndarray
    washout: int

    def __post_init__(self):
        if self.design.shape[0] != self.targets.shape[0]:
            raise TrainingError("design and targets must have the same row count")
        if not 0 <= self.washout < self.design.shape[0]:
            raise TrainingError("washout must leave at least one usable row")

    @property
    def X(self):
        return self.design[self.washout:]

    @property
    def d(self):
        return self.targets[self.washout:]


@dataclass
class RidgeSolution:
    weights: np.ndarray
    lam: float
    train_nmse: float
    rank_deficient: bool = False


def nmse(y, d):
    """Mean squared error normalised by the variance of the target."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if y.shape != d.shape:
        raise ValueError("y and d must have the same shape")
    if d.size < 2:
        raise ValueError("need at least two samples")
    var = np.mean((d - d.mean()) ** 2)
    if var == 0.0:
        raise ValueError("NMSE is undefined for a constant target")
    return float(np.mean((y - d) ** 2) / var)


def harvest(config, teacher, washout=DEFAULT_WASHOUT, hw=None, noise=None,
            jitter=0.0, jitter_seed=None):
    """Drive with ``teacher`` and pair each state with the next teacher value.

    Row ``n`` of the design is the acquired state after input ``u(n)``;
    its target is ``u(n+1)``. ``jitter`` adds white Gaussian noise to the
    drive (not to the targets), which teaches the readout to damp input
    perturbations of that size.
    """
    u = np.asarray(teacher, dtype=float)
    if u.ndim != 1 or u.shape[0] < washout + 2:
        raise TrainingError(
            f"teacher of length {u.shape[0]} is too short for washout {washout}")
    driven = u[:-1]
    if jitter > 0:
        rng = np.random.default_rng(jitter_seed)
        driven = driven + jitter * rng.standard_normal(driven.shape[0])
    traj, _ = drive(config, driven, hw=hw, noise=noise)
    return TrainingSet(design=traj.states, targets=u[1:].copy(), washout=washout)


def ridge_solve(ts, lam=DEFAULT_LAMBDA):
    """Minimise ``|Xw - d|^2 + lam |w|^2`` over the rows after the washout.

    Solved as an augmented least-squares problem (SVD based), which gives
    the minimum-norm solution when ``lam == 0`` and ``X`` is rank deficient.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X, d = ts.X, ts.d
    n = X.shape[1]
    if lam > 0:
        A = np.vstack([X, np.sqrt(lam) * np.eye(n)])
        b = np.concatenate([d, np.zeros(n)])
    else:
        A, b = X, d
    w, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    fit = X @ w
    var = np.mean((d - d.mean()) ** 2)
    train = float(np.mean((fit - d) ** 2) / var) if var > 0 else float("inf")
    return RidgeSolution(weights=w, lam=float(lam), train_nmse=train,
                         rank_deficient=bool(rank < n))


def train(config, teacher, lam=DEFAULT_LAMBDA, washout=DEFAULT_WASHOUT, hw=None,
          seed=None, jitter=0.0):
    """Harvest then ridge-solve. Constant teachers are rejected."""
    u = np.asarray(teacher, dtype=float)
    if u.size >= 2 and np.ptp(u[1:]) == 0:
        raise TrainingError("teacher is constant, nothing to learn")
    noise_ss, jitter_ss = np.random.SeedSequence(seed).spawn(2)
    ts = harvest(config, u, washout=washout, hw=hw, noise=noise_ss, jitter=jitter,
                 jitter_seed=jitter_ss)
    return ridge_solve(ts, lam)
