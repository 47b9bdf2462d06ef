"""Command-line front end.

Exit codes: 0 success, 1 configuration or parse error, 2 numeric failure
(for example a boundary requested for a model that never violates).

The JSON summary has a fixed key order: subcommand, config, overrides,
violation, ch_max, theta_max, theta_boundary, eta_threshold, containment,
details, wall_clock_s.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .analysis import (
    NoViolationError,
    SweepRow,
    criterion_region,
    efficiency_threshold,
    find_violation_boundary,
    is_violation,
    max_violation,
    sweep_ch,
)
from .config import POLICIES, Config, ConfigError, parse_config
from .core import BellError
from .models import ModelKind
from .simulator import estimate_ch, estimate_conditional, estimate_probabilities, run_experiment

CSV_HEADER = ("theta_rad", "ch_analytic", "ch_mc", "ch_mc_stderr", "p_cond", "criterion", "violation")

SUBCOMMANDS = ("sweep", "run", "boundary", "efficiency", "compare")

# flag -> config key
FLAGS = {
    "--model": "model",
    "--trials": "trials",
    "--seed": "seed",
    "--workers": "workers",
    "--setting-policy": "setting_policy",
    "--window": "window_s",
    "--jitter": "jitter_s",
    "--delay": "delay_s",
    "--efficiency": "efficiency",
    "--theta-min": "theta_min",
    "--theta-max": "theta_max",
    "--theta-steps": "theta_steps",
    "--theta": "theta",
    "--arrangement": "arrangement",
    "--output": "output",
    "--format": "format",
}

BOUNDARY_DIGITS = 6  # bisection tolerance 1e-6
THRESHOLD_DIGITS = 4  # bisection tolerance 1e-4


def _num(x: float) -> str:
    return format(x, ".9g")


def _bool(b: bool) -> str:
    return "true" if b else "false"


def emit_sweep_csv(rows: Sequence[SweepRow], destination) -> None:
    """Write sweep rows as CSV to a path or a text stream."""
    if not rows:
        raise ValueError("no sweep rows to write")
    if isinstance(destination, (str, Path)):
        with open(destination, "w", newline="") as fh:
            emit_sweep_csv(rows, fh)
        return
    w = csv.writer(destination, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([
            _num(r.theta),
            _num(r.ch_analytic),
            "" if r.ch_mc is None else _num(r.ch_mc.value),
            "" if r.ch_mc is None else _num(r.ch_mc.stderr),
            _num(r.p_cond),
            _bool(r.criterion),
            _bool(r.violation),
        ])


def emit_summary_json(summary: dict, destination) -> None:
    text = json.dumps(summary, indent=2) + "\n"
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text)
    else:
        destination.write(text)


def analytic_summary(cfg: Config, model=None) -> dict:
    """The analytic headline numbers for one model, in summary key order."""
    model = model or cfg.model_spec()
    arrangement = cfg.arrangement_obj()
    theta_max, ch_max = max_violation(model, arrangement)
    try:
        boundary = round(find_violation_boundary(model, arrangement), BOUNDARY_DIGITS)
    except NoViolationError:
        boundary = None
    eta = efficiency_threshold(model, arrangement)
    region = criterion_region(model, cfg.grid(), arrangement)
    return {
        "violation": is_violation(ch_max),
        "ch_max": ch_max,
        "theta_max": theta_max,
        "theta_boundary": boundary,
        "eta_threshold": None if eta is None else round(eta, THRESHOLD_DIGITS),
        "containment": region.contained,
    }


def _estimate_dict(e) -> Optional[dict]:
    return None if e is None else asdict(e)


def _details_sweep(cfg: Config, rows: list[SweepRow]) -> dict:
    region = criterion_region(cfg.model_spec(), [r.theta for r in rows], cfg.arrangement_obj())
    return {
        "rows": len(rows),
        "monte_carlo": cfg.trials is not None,
        "last_criterion_theta": region.last_criterion_theta,
        "last_violation_theta": region.last_violation_theta,
        "mc_violation_rows": sum(
            1 for r in rows if r.ch_mc is not None and r.ch_mc.value > 1.0),
    }


def _details_run(cfg: Config) -> dict:
    counts = run_experiment(cfg.experiment())
    est = estimate_probabilities(counts)
    ch = estimate_ch(counts)
    ab = counts.rows[0]
    cond = estimate_conditional(ab, seed=cfg.seed) if ab.singles1 else None
    return {
        "theta": cfg.theta,
        "counts": counts.as_dict(),
        "estimates": {f.name: _estimate_dict(getattr(est, f.name)) for f in fields(est)},
        "ch_mc": _estimate_dict(ch),
        "p_cond_mc": _estimate_dict(cond),
    }


def _details_compare(cfg: Config) -> dict:
    out = {}
    for kind in ModelKind:
        out[kind.value] = analytic_summary(cfg, replace(cfg.model_spec(), kind=kind))
    return {"models": out}


def _build_parser() -> argparse.ArgumentParser:
    class _Parser(argparse.ArgumentParser):
        def error(self, message):
            raise ConfigError(message)

    p = _Parser(prog="bellsim", description="CH/CHSH Bell-test simulator")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", dest="config_path", help="key = value config file")
    for flag, key in FLAGS.items():
        p.add_argument(flag, dest=key, metavar=key.upper())
    return p


def _write_outputs(cfg: Config, fmt: str, summary: dict, rows, stdout) -> None:
    if fmt in ("csv", "both"):
        emit_sweep_csv(rows, cfg.output if cfg.output else stdout)
    if fmt == "json":
        emit_summary_json(summary, cfg.output if cfg.output else stdout)
    elif fmt == "both":
        emit_summary_json(summary, Path(cfg.output).with_suffix(".json"))


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    started = time.perf_counter()
    try:
        args = _build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items()
                     if k in FLAGS.values() and v is not None}
        text = Path(args.config_path).read_text() if args.config_path else ""
        cfg = parse_config(text, overrides)
        fmt = cfg.format or ("csv" if args.subcommand == "sweep" else "json")
        cfg = replace(cfg, format=fmt)
        if fmt != "json" and args.subcommand != "sweep":
            raise ConfigError(f"format {fmt!r} is only available for sweep")
        if fmt == "both" and cfg.output is None:
            raise ConfigError("format both needs an output path")
    except (ConfigError, OSError) as exc:
        print(f"bellsim: config error: {exc}", file=stderr)
        return 1

    try:
        model = cfg.model_spec()
        rows = None
        if args.subcommand == "boundary":
            # a boundary request for a non-violating model is a hard failure
            find_violation_boundary(model, cfg.arrangement_obj())
        summary = {"subcommand": args.subcommand, "config": cfg.as_dict(), "overrides": overrides}
        summary.update(analytic_summary(cfg))
        if args.subcommand == "sweep":
            rows = sweep_ch(model, cfg.arrangement_obj(), cfg.grid(), mc_trials=cfg.trials,
                            seed=cfg.seed, workers=cfg.workers,
                            setting_policy=POLICIES[cfg.setting_policy],
                            coincidence_window=cfg.window_s)
            details = _details_sweep(cfg, rows)
        elif args.subcommand == "run":
            details = _details_run(cfg)
        elif args.subcommand == "compare":
            details = _details_compare(cfg)
        elif args.subcommand == "boundary":
            details = {"tolerance": 1e-6}
        else:
            details = {"tolerance": 1e-4}
        summary["details"] = details
        summary["wall_clock_s"] = time.perf_counter() - started
    except NoViolationError as exc:
        print(f"bellsim: no violation: {exc}", file=stderr)
        return 2
    except (BellError, ArithmeticError) as exc:
        print(f"bellsim: numeric failure: {exc}", file=stderr)
        return 2

    _write_outputs(cfg, fmt, summary, rows, stdout)
    return 0


def run_to_string(argv: Sequence[str]) -> tuple[int, str, str]:
    """Run :func:`main` capturing stdout and stderr."""
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


if __name__ == "__main__":
    sys.exit(main())
