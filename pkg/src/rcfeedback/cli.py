"""Command-line entry point.

Configuration is read from a JSON document (``--config``); every field of
:class:`~rcfeedback.harness.ExperimentConfig`, and every field of the nested
hardware model, can be overridden with a flag of the same name, e.g.
``--alpha 0.85 --noise_sigma 1e-4 --nus 0.05,0.1``.

Exit status: 0 whenever the experiment ran (failed cells are results),
2 for configuration errors, 3 for I/O errors.
"""
import argparse
from dataclasses import fields, replace
import json
import logging
import os
import sys

from rcfeedback import harness
from rcfeedback.hardware import HardwareModel
from rcfeedback.reservoir import ConfigurationError

EXIT_CONFIG = 2
EXIT_IO = 3

_LISTS = {"nus": float, "sigmas": float, "lengths": int, "jitter_grid": float}
_HW_FIELDS = [f.name for f in fields(HardwareModel)]
_CFG_FIELDS = [f.name for f in fields(harness.ExperimentConfig) if f.name != "hardware"]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _optional(cast):
    def parse(text):
        return None if text.strip().lower() in ("none", "null", "") else cast(text)
    return parse


def _list(cast):
    def parse(text):
        return [cast(v) for v in text.replace(" ", "").split(",") if v]
    return parse


def _caster(name, default):
    if name == "jitter_grid":
        return _optional(_list(float))
    if name in _LISTS:
        return _list(_LISTS[name])
    if isinstance(default, bool):
        return _bool
    if name in ("alpha", "beta", "drive_noise_sigma", "jitter"):
        return _optional(float)
    if name in ("window", "max_length", "mask_seed_base"):
        return _optional(int)
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _add_overrides(p):
    cfg_defaults = harness.ExperimentConfig()
    hw_defaults = cfg_defaults.hardware
    g = p.add_argument_group("config overrides")
    for name in _CFG_FIELDS:
        g.add_argument(f"--{name}", dest=name, default=argparse.SUPPRESS,
                       type=_caster(name, getattr(cfg_defaults, name)))
    h = p.add_argument_group("hardware overrides")
    for name in _HW_FIELDS:
        h.add_argument(f"--{name}", dest=name, default=argparse.SUPPRESS,
                       type=_caster(name, getattr(hw_defaults, name)))


def build_parser():
    p = argparse.ArgumentParser(prog="rcfeedback",
                                description="Ring reservoir with output feedback: runs and scans.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="JSON configuration document")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--no-records", action="store_true",
                        help="skip per-cell JSON records")
        _add_overrides(sp)
        return sp

    common(sub.add_parser("run", help="train and run a single cell"), "results/run")
    common(sub.add_parser("scan-bandwidth", help="frequency success vs nu"), "results/bandwidth")
    common(sub.add_parser("scan-patterns", help="pattern success vs length"), "results/patterns")
    common(sub.add_parser("sweep-noise", help="max pattern length vs noise"), "results/noise")

    r = sub.add_parser("replay", help="re-run a stored record and compare outputs")
    r.add_argument("record")
    r.add_argument("--out", help="write the replayed record here")

    e = sub.add_parser("export", help="flatten a records directory into a CSV table")
    e.add_argument("records", help="directory of JSON records")
    e.add_argument("--out", default="runs.csv")

    c = sub.add_parser("dump-config", help="print the effective configuration")
    c.add_argument("--config")
    _add_overrides(c)
    return p


def load_config(args, task=None):
    """Defaults, then the config document, then command-line flags."""
    doc = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise OSError(f"cannot read config {args.config}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{args.config}: invalid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{args.config}: expected a JSON object")
    hw = dict(doc.pop("hardware", {}) or {})
    if task is not None and "task" not in doc:
        doc["task"] = task
    given = vars(args)
    for name in _CFG_FIELDS:
        if name in given:
            doc[name] = given[name]
    for name in _HW_FIELDS:
        if name in given:
            hw[name] = given[name]
    try:
        base = harness.ExperimentConfig().hardware.to_dict()
        base.update(hw)
        doc["hardware"] = HardwareModel.from_dict(base)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"hardware: {e}") from None
    return harness.ExperimentConfig.from_dict(doc)


def _summary(result):
    cols = result.columns
    lines = ["  ".join(cols)]
    for row in result.rows:
        lines.append("  ".join(f"{row[c]:.4g}" if isinstance(row[c], float) else str(row[c])
                               for c in cols))
    return "\n".join(lines)


def _write_config(cfg, out):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "config.json")
    try:
        with open(path, "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e


def cmd_run(args):
    cfg = load_config(args)
    rec = harness.single_run(cfg, store_outputs=True)
    _write_config(cfg, args.out)
    path = rec.save(os.path.join(args.out, "record.json"))
    status = "success" if rec.success else "failure"
    print(f"{rec.task}: {status}, error {rec.error_value:.3g}"
          f"{' (diverged)' if rec.diverged else ''} -> {path}")
    return 0


def _cmd_scan(args, task, fn):
    cfg = load_config(args, task)
    if fn is harness.pattern_length_scan:
        cfg = replace(cfg, task="pattern")
    result = fn(cfg)
    _write_config(cfg, args.out)
    paths = harness.save_scan(result, args.out, not args.no_records, cfg.curve_stride)
    print(_summary(result))
    if "monotone" in result.extra and not result.extra["monotone"]:
        print("warning: max_L is not monotone in sigma", file=sys.stderr)
    print("wrote " + ", ".join(paths))
    return 0


def cmd_replay(args):
    old = harness.load_record(args.record)
    new = harness.replay(old)
    if args.out:
        new.save(args.out)
    if old.outputs is None:
        print("record holds no outputs; replayed outcome "
              f"{'success' if new.success else 'failure'} "
              f"(stored {'success' if old.success else 'failure'})")
        return 0
    same = old.outputs == new.outputs
    print("identical outputs" if same else "outputs differ")
    return 0


def cmd_export(args):
    rows = harness.export_records(args.records, args.out)
    print(f"{len(rows)} records -> {args.out}")
    return 0


def cmd_dump_config(args):
    print(json.dumps(load_config(args).to_dict(), indent=2))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": cmd_run,
        "scan-bandwidth": lambda a: _cmd_scan(a, "frequency", harness.bandwidth_scan),
        "scan-patterns": lambda a: _cmd_scan(a, "pattern", harness.pattern_length_scan),
        "sweep-noise": lambda a: _cmd_scan(a, "pattern", harness.noise_sweep),
        "replay": cmd_replay,
        "export": cmd_export,
        "dump-config": cmd_dump_config,
    }
    try:
        return handlers[args.command](args)
    except (ConfigurationError, harness.RecordError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
