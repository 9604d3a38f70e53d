"""Experiment orchestration: single cells, the three scans, records and tables.

Every cell draws its seeds from ``(master_seed, scan name, cell indices)``
only, so cells can be run in any order, in parallel, or on their own and
still produce the same numbers.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields, replace
import json
import logging
import math
import os
import time
import zlib

import numpy as np

from rcfeedback import _backend
from rcfeedback.hardware import HardwareModel
from rcfeedback.reservoir import (DEFAULT_BLOWUP, DEFAULT_WARMUP, ROUNDTRIP_TIME,
                                  ConfigurationError, ReservoirConfig, autonomous_run,
                                  make_mask)
from rcfeedback.tasks import (FrequencyTask, PatternTask, evaluate_frequency_run,
                              evaluate_pattern_run, periodic_teacher, physical_frequency,
                              random_pattern, sine_teacher)
from rcfeedback.trainer import DEFAULT_LAMBDA, DEFAULT_WASHOUT, TrainingError, train

log = logging.getLogger(__name__)

# per-task reservoir gains used when ``alpha`` / ``beta`` are left unset
PRESETS = {
    "frequency": {"alpha": 0.9, "beta": 0.3},
    "pattern": {"alpha": 0.8, "beta": 8.0},
}

BANDWIDTH_GRID = [0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0]
PATTERN_LENGTHS = list(range(2, 19))
JITTER_GRID = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3]
SIGMA_GRID = [0.0, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]

BANDWIDTH_COLUMNS = ["nu", "mask_seed_base", "successes", "trials"]
NOISE_COLUMNS = ["sigma", "max_L", "trials_per_L"]
PATTERN_COLUMNS = ["L", "successes", "trials", "success_fraction", "median_error"]


@dataclass
class ExperimentConfig:
    """Everything a scan needs. Counts follow the reference protocol.

    ``alpha`` / ``beta`` set to ``None`` pick the per-task preset.
    Training adds Gaussian jitter to the harvested states. With
    ``jitter_grid`` set, each cell trains once per grid value and keeps the
    one whose closed-loop run of ``validation_length`` steps (separate noise)
    scores best. With ``jitter_grid=None`` a fixed ``jitter`` is used;
    ``None`` there means the hardware noise level, floored at ``jitter_floor``.
    ``hardware`` is a :class:`HardwareModel`; the noise sweep overrides its
    ``noise_sigma`` and, with ``sweep_isolate_noise``, turns every other
    effect off so that only the noise level varies.
    """

    task: str = "frequency"
    alpha: float | None = None
    beta: float | None = None
    n_neurons: int = 100
    latency_prefix: int = 23
    roundtrip_time: float = ROUNDTRIP_TIME
    hardware: HardwareModel = field(
        default_factory=lambda: HardwareModel(noise_sigma=1e-3, highpass=False))
    lam: float = DEFAULT_LAMBDA
    washout: int = DEFAULT_WASHOUT
    jitter: float | None = None
    jitter_floor: float = 1e-4
    jitter_grid: list | None = field(default_factory=lambda: list(JITTER_GRID))
    validation_length: int = 2000
    warmup_length: int = DEFAULT_WARMUP
    train_length: int = 1000
    autonomous_length: int = 10000
    blowup: float = DEFAULT_BLOWUP
    amplitude_tol: float = 0.1
    threshold: float = 1e-3
    window: int | None = None
    nu: float = 0.1
    pattern_length: int = 10
    nus: list = field(default_factory=lambda: list(BANDWIDTH_GRID))
    lengths: list = field(default_factory=lambda: list(PATTERN_LENGTHS))
    sigmas: list = field(default_factory=lambda: list(SIGMA_GRID))
    masks: int = 10
    pattern_masks: int = 5
    patterns_per_mask: int = 20
    patterns_per_length: int = 10
    max_length: int | None = None
    sweep_isolate_noise: bool = True
    master_seed: int = 0
    mask_seed_base: int | None = None
    workers: int = 1
    store_outputs: bool = False
    curve_stride: int = 10

    def __post_init__(self):
        if isinstance(self.hardware, dict):
            self.hardware = HardwareModel.from_dict(self.hardware)
        self.validate()

    def validate(self):
        if self.task not in PRESETS:
            raise ConfigurationError(f"task must be one of {sorted(PRESETS)}, got {self.task!r}")
        for name in ("n_neurons", "warmup_length", "train_length", "autonomous_length",
                     "masks", "pattern_masks", "patterns_per_mask", "patterns_per_length",
                     "workers", "curve_stride", "pattern_length", "validation_length"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0 <= self.latency_prefix < self.n_neurons:
            raise ConfigurationError("latency_prefix must lie in [0, n_neurons)")
        if self.washout < 0 or self.train_length < self.washout + 2:
            raise ConfigurationError("train_length must exceed washout by at least 2")
        if self.jitter_grid is not None and (len(self.jitter_grid) == 0
                                             or any(not j >= 0 for j in self.jitter_grid)):
            raise ConfigurationError("jitter_grid must be a non-empty list of values >= 0")
        if self.lam < 0 or (self.jitter is not None and self.jitter < 0) or self.jitter_floor < 0:
            raise ConfigurationError("lam and jitter must be >= 0")
        if not 0 < self.nu <= math.pi or any(not 0 < v <= math.pi for v in self.nus):
            raise ConfigurationError("frequencies must lie in (0, pi]")
        if any(int(L) < 2 for L in self.lengths):
            raise ConfigurationError("pattern lengths must be >= 2")
        if any(not s >= 0 for s in self.sigmas):
            raise ConfigurationError("noise levels must be >= 0")
        if self.max_length is not None and self.max_length < 2:
            raise ConfigurationError("max_length must be >= 2")

    def gains(self, task=None):
        preset = PRESETS[task or self.task]
        a = preset["alpha"] if self.alpha is None else self.alpha
        b = preset["beta"] if self.beta is None else self.beta
        return float(a), float(b)

    def training_jitter(self):
        if self.jitter is not None:
            return float(self.jitter)
        return max(self.jitter_floor, self.hardware.acq_sigma)

    @property
    def length_cap(self):
        return self.n_neurons if self.max_length is None else min(self.max_length, self.n_neurons)

    def resolved_mask_seed_base(self):
        if self.mask_seed_base is not None:
            return int(self.mask_seed_base)
        return int(_seed_sequence(self.master_seed, "masks").generate_state(1)[0] >> 1)

    def to_dict(self):
        d = asdict(self)
        d["hardware"] = self.hardware.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigurationError(str(e)) from None


def _seed_sequence(master_seed, scan, *indices):
    key = (zlib.crc32(scan.encode()),) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def cell_seeds(master_seed, scan, *indices):
    """Integer seeds for one cell: pattern, training noise and run noise."""
    s = _seed_sequence(master_seed, scan, *indices).generate_state(3, np.uint64)
    return {"pattern_seed": int(s[0]), "train_seed": int(s[1]), "noise_seed": int(s[2])}


@dataclass
class RunRecord:
    """One executed cell, sufficient to replay it bit for bit."""

    task: str
    config: dict
    seeds: dict
    parameters: dict
    success: bool
    error_value: float
    diverged: bool
    metrics: dict = field(default_factory=dict)
    outputs: list | None = None
    duration: float = 0.0
    backend: str = ""
    error: str | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save(self, path):
        try:
            with open(path, "w") as fh:
                json.dump(_jsonable(self.to_dict()), fh, indent=1, allow_nan=True)
        except OSError as e:
            raise OSError(f"cannot write record {path}: {e.strerror}") from e
        return path


class RecordError(ValueError):
    pass


def load_record(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise OSError(f"cannot read record {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise RecordError(f"{path}: invalid JSON ({e})") from None
    try:
        return RunRecord.from_dict(doc)
    except TypeError:
        raise RecordError(f"{path} is not a run record") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _execute(task, cfg_dict, mask_seed, pattern, nu, seeds, store_outputs):
    """Train, warm up, close the loop and score one cell."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    hw = cfg.hardware
    alpha, beta = cfg.gains(task)
    rc = ReservoirConfig(alpha=alpha, beta=beta,
                         mask=make_mask(mask_seed, cfg.n_neurons, cfg.latency_prefix),
                         latency_prefix=cfg.latency_prefix, roundtrip_time=cfg.roundtrip_time)
    W = cfg.warmup_length
    if task == "frequency":
        teacher = sine_teacher(nu, cfg.train_length)
        warmup = sine_teacher(nu, W)
    else:
        teacher = periodic_teacher(pattern, cfg.train_length)
        warmup = periodic_teacher(pattern, W)

    def score(outputs, diverged):
        if task == "frequency":
            ft = FrequencyTask(nu, threshold=cfg.threshold, amplitude_tol=cfg.amplitude_tol)
            return None, evaluate_frequency_run(outputs, ft, diverged)
        return evaluate_pattern_run(outputs, pattern, window=cfg.window, offset=W,
                                    threshold=cfg.threshold, diverged=diverged)

    def fit(jitter):
        return train(rc, teacher, lam=cfg.lam, washout=cfg.washout, hw=hw,
                     seed=seeds["train_seed"], jitter=jitter)

    t0 = time.perf_counter()
    extra = {}
    if cfg.jitter_grid:
        # pick the training jitter on a held-out closed-loop run with its own noise
        val_noise = np.random.SeedSequence(seeds["noise_seed"], spawn_key=(1,))
        errors = []
        for j in cfg.jitter_grid:
            val = autonomous_run(rc, fit(j).weights, warmup, cfg.validation_length, hw=hw,
                                 noise=val_noise, blowup=cfg.blowup)
            errors.append(score(val.outputs, val.diverged)[1].error_value)
        jitter = float(cfg.jitter_grid[int(np.argmin(errors))])
        extra = {"jitter": jitter, "validation_errors": errors}
    else:
        jitter = cfg.training_jitter()
    sol = fit(jitter)
    run = autonomous_run(rc, sol.weights, warmup, cfg.autonomous_length, hw=hw,
                         noise=seeds["noise_seed"], blowup=cfg.blowup)
    metrics = {"train_nmse": sol.train_nmse, "clipped_weights": run.clipped_weights,
               "n_completed": run.n_completed}
    metrics.update(extra)
    series, outcome = score(run.outputs, run.diverged)
    if task == "frequency":
        metrics["physical_frequency_hz"] = physical_frequency(nu, cfg.roundtrip_time)
    elif series.size:
        metrics["median_windowed_nmse"] = float(np.median(series))
    duration = time.perf_counter() - t0
    return outcome, metrics, run.outputs if store_outputs else None, series, duration


def single_run(config, task=None, nu=None, pattern=None, mask_seed=None, seeds=None,
               store_outputs=True, with_series=False):
    """Run one cell and return its :class:`RunRecord`.

    Unset arguments come from ``config``: ``nu`` / ``pattern_length`` for the
    task, seeds derived from ``master_seed`` under the scan name "run".
    Training failures and divergence end up in the record, not as exceptions.
    """
    task = task or config.task
    seeds = dict(seeds) if seeds is not None else cell_seeds(config.master_seed, "run")
    if mask_seed is None:
        mask_seed = config.resolved_mask_seed_base()
    params = {"mask_seed": int(mask_seed)}
    if task == "frequency":
        nu = config.nu if nu is None else float(nu)
        params["nu"] = nu
    else:
        if pattern is None:
            pattern = random_pattern(seeds["pattern_seed"], config.pattern_length)
        if not isinstance(pattern, PatternTask):
            pattern = PatternTask(pattern)
        params["pattern"] = pattern.pattern.tolist()
        params["L"] = pattern.length
    cfg_dict = config.to_dict()
    cfg_dict["task"] = task
    series = None
    try:
        outcome, metrics, outputs, series, duration = _execute(
            task, cfg_dict, mask_seed, pattern, nu, seeds, store_outputs)
        rec = RunRecord(task=task, config=cfg_dict, seeds=seeds, parameters=params,
                        success=outcome.success, error_value=outcome.error_value,
                        diverged=outcome.diverged, metrics=metrics,
                        outputs=None if outputs is None else outputs.tolist(),
                        duration=duration, backend=_backend_name())
    except (TrainingError, ValueError) as e:
        log.warning("cell failed: %s", e)
        rec = RunRecord(task=task, config=cfg_dict, seeds=seeds, parameters=params,
                        success=False, error_value=float("inf"), diverged=False,
                        backend=_backend_name(), error=str(e))
    return (rec, series) if with_series else rec


def _backend_name():
    return "numba" if _backend.numba_enabled() else "numpy"


def replay(record):
    """Re-execute a stored record; returns the fresh record (outputs included)."""
    if not isinstance(record, RunRecord):
        record = load_record(record)
    cfg = ExperimentConfig.from_dict(record.config)
    p = record.parameters
    return single_run(cfg, task=record.task, nu=p.get("nu"),
                      pattern=p.get("pattern"), mask_seed=p["mask_seed"],
                      seeds=record.seeds, store_outputs=True)


def _run_cell(args):
    cfg_dict, kw = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    rec, series = single_run(cfg, with_series=True, **kw)
    return rec, series


def run_cells(config, cells):
    """Execute cell argument dicts, in a worker pool when ``workers > 1``.

    Results come back in the order of ``cells`` whatever the pool does.
    """
    jobs = [(config.to_dict(), kw) for kw in cells]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_cell, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    return [_run_cell(j) for j in jobs]


@dataclass
class ScanResult:
    name: str
    columns: list
    rows: list
    records: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def bandwidth_scan(config):
    """Frequency-task success counts over ``config.nus`` and ``config.masks`` masks.

    Mask ``m`` is ``make_mask(mask_seed_base + m)`` for every frequency, so
    a column of the table always compares the same reservoirs.
    """
    base = config.resolved_mask_seed_base()
    cells = []
    for i, nu in enumerate(config.nus):
        for m in range(config.masks):
            cells.append(dict(task="frequency", nu=float(nu), mask_seed=base + m,
                              seeds=cell_seeds(config.master_seed, "bandwidth", i, m),
                              store_outputs=config.store_outputs))
    results = run_cells(config, cells)
    rows, records = [], []
    for i, nu in enumerate(config.nus):
        chunk = [r for r, _ in results[i * config.masks:(i + 1) * config.masks]]
        records.extend(chunk)
        rows.append({"nu": float(nu), "mask_seed_base": base,
                     "successes": sum(r.success for r in chunk), "trials": len(chunk)})
    return ScanResult("bandwidth", BANDWIDTH_COLUMNS, rows, records)


def pattern_length_scan(config):
    """Pattern-task scan: ``pattern_masks`` masks times ``patterns_per_mask`` patterns per L.

    Returns the success table and, per L, the windowed NMSE averaged over
    cells (sampled every ``curve_stride`` steps).
    """
    base = config.resolved_mask_seed_base()
    cells = []
    for L in config.lengths:
        for q in range(config.patterns_per_mask):
            pseed = cell_seeds(config.master_seed, "patterns", L, q)["pattern_seed"]
            for m in range(config.pattern_masks):
                seeds = cell_seeds(config.master_seed, "pattern-scan", L, q, m)
                seeds["pattern_seed"] = pseed
                cells.append(dict(task="pattern", pattern=random_pattern(pseed, int(L)),
                                  mask_seed=base + m, seeds=seeds,
                                  store_outputs=config.store_outputs))
    results = run_cells(config, cells)
    per = config.patterns_per_mask * config.pattern_masks
    rows, records, curves = [], [], {}
    for k, L in enumerate(config.lengths):
        chunk = results[k * per:(k + 1) * per]
        recs = [r for r, _ in chunk]
        records.extend(recs)
        errs = np.array([r.error_value for r in recs])
        rows.append({"L": int(L), "successes": int(sum(r.success for r in recs)),
                     "trials": len(recs),
                     "success_fraction": float(np.mean([r.success for r in recs])),
                     "median_error": float(np.median(errs))})
        series = [s for _, s in chunk if s is not None and s.size]
        if series:
            n = min(s.shape[0] for s in series)
            mean = np.mean([s[:n] for s in series], axis=0)
            curves[int(L)] = mean[::config.curve_stride]
    return ScanResult("patterns", PATTERN_COLUMNS, rows, records, curves)


def max_generable_length(successes):
    """Largest L such that every length from 2 up to L passed (0 if L=2 fails).

    ``successes`` maps L to a bool; lengths must be consecutive from 2.
    """
    best = 0
    for L in sorted(successes):
        if not successes[L]:
            break
        best = L
    return best


def _sweep_hardware(config, sigma):
    hw = config.hardware.with_noise(sigma)
    if config.sweep_isolate_noise:
        hw = replace(hw, noise=True, adc=False, dac=False, fixed_point_weights=False,
                     highpass=False)
    return hw


def _length_passes(config, sigma, L, attempt):
    """All ``patterns_per_length`` cells at one (sigma, L).

    Cells are keyed by (L, pattern index, attempt) and not by sigma: every
    noise level sees the same masks, patterns and unit noise draws.
    """
    cfg = replace(config, hardware=_sweep_hardware(config, sigma))
    base = config.resolved_mask_seed_base()
    cells = []
    for p in range(config.patterns_per_length):
        seeds = cell_seeds(config.master_seed, "noise-sweep", L, p, attempt)
        cells.append(dict(task="pattern", pattern=random_pattern(seeds["pattern_seed"], L),
                          mask_seed=base + p, seeds=seeds,
                          store_outputs=config.store_outputs))
    recs = [r for r, _ in run_cells(cfg, cells)]
    return all(r.success for r in recs), recs


def search_max_length(config, sigma, attempt=0, exhaustive=False):
    """Ascending search from L=2 with the all-trials rule.

    Stops after the first failing length unless ``exhaustive``. Returns
    ``(max_L, {L: passed}, records)``.
    """
    passed, records = {}, []
    for L in range(2, config.length_cap + 1):
        ok, recs = _length_passes(config, sigma, L, attempt)
        passed[L] = ok
        records.extend(recs)
        if not ok and not exhaustive:
            break
    return max_generable_length(passed), passed, records


def noise_sweep(config):
    """Largest generable pattern length for each noise level in ``config.sigmas``.

    The emitted column is checked for being non-increasing in sigma; a level
    that beats a smaller noise level is searched once more with fresh cells
    and the second value is kept.
    """
    sigmas = [float(s) for s in config.sigmas]
    found, records, attempts = {}, [], {}
    for s in sigmas:
        found[s], _, recs = search_max_length(config, s)
        attempts[s] = 1
        records.extend(recs)
    order = sorted(sigmas)
    for i in range(1, len(order)):
        s = order[i]
        if found[s] > min(found[t] for t in order[:i]):
            log.info("max_L not monotone at sigma=%g, re-running", s)
            found[s], _, recs = search_max_length(config, s, attempt=1)
            attempts[s] = 2
            records.extend(recs)
    ordered = [found[s] for s in order]
    monotone = all(a >= b for a, b in zip(ordered, ordered[1:]))
    rows = [{"sigma": s, "max_L": found[s], "trials_per_L": config.patterns_per_length}
            for s in sigmas]
    return ScanResult("noise", NOISE_COLUMNS, rows, records,
                      extra={"monotone": monotone, "attempts": attempts})


# --- persistence -----------------------------------------------------------

def write_table(path, columns, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    except OSError as e:
        raise OSError(f"cannot write table {path}: {e.strerror}") from e
    return path


def read_table(path):
    """Rows of a written table with numbers parsed back."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise OSError(f"cannot read table {path}: {e.strerror}") from e
    return [{k: _parse(v) for k, v in r.items()} for r in rows]


def _parse(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return {"True": True, "False": False}.get(v, v)


def write_curves(path, curves, stride):
    rows = [{"L": L, "step": k * stride, "mean_nmse": float(v)}
            for L, c in sorted(curves.items()) for k, v in enumerate(c)]
    return write_table(path, ["L", "step", "mean_nmse"], rows)


RUN_COLUMNS = ["record", "task", "nu", "L", "mask_seed", "noise_sigma", "alpha", "beta",
               "success", "error_value", "diverged", "train_nmse", "duration"]


def record_row(name, rec):
    p, c = rec.parameters, rec.config
    alpha, beta = ExperimentConfig.from_dict(c).gains(rec.task)
    return {"record": name, "task": rec.task, "nu": p.get("nu", ""), "L": p.get("L", ""),
            "mask_seed": p["mask_seed"], "noise_sigma": c["hardware"]["noise_sigma"],
            "alpha": alpha, "beta": beta, "success": rec.success,
            "error_value": rec.error_value, "diverged": rec.diverged,
            "train_nmse": rec.metrics.get("train_nmse", ""), "duration": rec.duration}


def save_records(directory, prefix, records):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for k, rec in enumerate(records):
        paths.append(rec.save(os.path.join(directory, f"{prefix}-{k:05d}.json")))
    return paths


def export_records(record_dir, out_path):
    """Flatten every ``*.json`` record in ``record_dir`` into one CSV table."""
    try:
        names = sorted(n for n in os.listdir(record_dir) if n.endswith(".json"))
    except OSError as e:
        raise OSError(f"cannot list {record_dir}: {e.strerror}") from e
    rows = []
    for n in names:
        try:
            rec = load_record(os.path.join(record_dir, n))
        except RecordError as e:
            log.info("skipping %s", e)
            continue
        rows.append(record_row(n, rec))
    write_table(out_path, RUN_COLUMNS, rows)
    return rows


def save_scan(result, out_dir, save_records_too=True, stride=1):
    os.makedirs(out_dir, exist_ok=True)
    paths = [write_table(os.path.join(out_dir, f"{result.name}.csv"), result.columns,
                         result.rows)]
    if result.curves:
        paths.append(write_curves(os.path.join(out_dir, f"{result.name}_curves.csv"),
                                  result.curves, stride))
    if save_records_too and result.records:
        save_records(os.path.join(out_dir, "records"), result.name, result.records)
    return paths
