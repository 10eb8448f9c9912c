"""Command-line driver: ``risce {simulate,sweep,reproduce,check}``.

Exit codes: 0 success, 2 configuration error, 3 identifiability violation,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import io as rio
from .estimators import ALGORITHMS, check_identifiability
from .harness import (
    PRESET_NAMES,
    SWEEP_AXES,
    ExperimentSpec,
    flops_estimate,
    get_preset,
    model_kind,
    run_monte_carlo,
)
from .system_model import SystemConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IDENTIFIABILITY = 3
EXIT_NUMERICAL = 4

THREADS_ENV = "RISCE_THREADS"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _default_threads():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", EXIT_CONFIG) from None
    if value < 1:
        raise CliError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", EXIT_CONFIG)
    return value


def _add_common(p, with_output=True):
    p.add_argument("--config", metavar="FILE", help="key=value config file ('#' starts a comment)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable; applied after --config)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    if with_output:
        p.add_argument("-o", "--output", metavar="FILE", help="result file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (default: from the file suffix, else csv)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes (default: ${THREADS_ENV} or 1)")
        p.add_argument("--no-timing", action="store_true",
                       help="record zero runtimes so repeated runs give byte-identical files")
        p.add_argument("--quiet", action="store_true", help="suppress the progress line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risce", description="Tensor-based RIS channel estimation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo run at a single configuration")
    _add_common(p)
    p.add_argument("--algo", action="append", required=True, choices=ALGORITHMS,
                   help="estimator to run (repeatable)")

    p = sub.add_parser("sweep", help="Monte Carlo runs over one swept parameter")
    _add_common(p)
    p.add_argument("--algo", action="append", required=True, choices=ALGORITHMS)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated sweep values, e.g. 0,10,20,30")

    p = sub.add_parser("reproduce", help="run a named figure preset")
    _add_common(p)
    p.add_argument("preset", help=f"one of {', '.join(PRESET_NAMES)}")
    p.add_argument("--desk-scale", action="store_true", help="shrink N, K and run count")

    p = sub.add_parser("check", help="identifiability and complexity report")
    _add_common(p, with_output=False)
    p.add_argument("--algo", action="append", choices=ALGORITHMS, help="restrict the report")
    return parser


def _resolve_config(args, base=None) -> SystemConfig:
    try:
        file_values = rio.load_config(args.config) if args.config else {}
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        return rio.apply_overrides(base or SystemConfig(), file_values, overrides)
    except rio.ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CliError(f"config error: cannot read {args.config}: {exc.strerror}", EXIT_CONFIG) from None


def _parse_values(text):
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(float(item))
        except ValueError:
            raise CliError(f"config error: invalid sweep value {item!r} in --values", EXIT_CONFIG) from None
    if not values:
        raise CliError("config error: --values is empty", EXIT_CONFIG)
    return values


def _make_spec(**kwargs) -> ExperimentSpec:
    try:
        return ExperimentSpec(**kwargs)
    except ValueError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None


def _identifiability_message(cfg, algorithm, kind):
    ident = check_identifiability(cfg, algorithm, kind)
    if ident.ok:
        return None
    return (f"{algorithm} identifiability: {ident.requirement} required "
            f"(K_min={ident.k_min}), got K={cfg.K}, N={cfg.N}")


def _check_points(spec: ExperimentSpec, strict: bool):
    """Exit 3 if a point is unidentifiable (``strict``) or if every point is."""
    problems, ok_any = [], False
    for value in spec.sweep_values:
        try:
            cfg = spec.point_config(value)
        except ValueError as exc:
            raise CliError(f"config error: {spec.sweep_axis}={value}: {exc}", EXIT_CONFIG) from None
        for algorithm in spec.algorithms:
            msg = _identifiability_message(cfg, algorithm, spec.kind)
            if msg is None:
                ok_any = True
            else:
                problems.append(msg)
    if problems and (strict or not ok_any):
        raise CliError(problems[0], EXIT_IDENTIFIABILITY)
    for msg in problems:
        print(f"warning: skipping point, {msg}", file=sys.stderr)


def _threads(args):
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise CliError(f"config error: threads must be >= 1, got {threads}", EXIT_CONFIG)
    return threads


def _output_format(args):
    if args.format:
        return args.format
    if args.output and args.output.lower().endswith(".json"):
        return "json"
    return "csv"


def _run_and_write(spec: ExperimentSpec, args):
    threads = _threads(args)
    fmt = _output_format(args)
    n_points = len(spec.sweep_values)

    def progress(done, total):
        if not args.quiet:
            print(f"[{spec.name or 'run'}] point {done}/{total} done", file=sys.stderr, flush=True)

    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            result = run_monte_carlo(spec, workers=threads, timing=not args.no_timing,
                                     progress=progress if n_points else None)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise CliError(f"numerical failure: {exc}", EXIT_NUMERICAL) from None

    text = rio.dumps(result, fmt)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    bad = [r for r in result.rows if not r.skipped and not all(
        math.isfinite(v) for v in (r.nmse_H, r.nmse_G, r.nmse_E))]
    if bad:
        r = bad[0]
        raise CliError(f"numerical failure: non-finite NMSE for {r.algorithm} at "
                       f"{r.sweep_axis}={r.sweep_value}", EXIT_NUMERICAL)
    return EXIT_OK


def cmd_simulate(args):
    cfg = _resolve_config(args)
    spec = _make_spec(base=cfg, sweep_axis="snr_db", sweep_values=(cfg.snr_db,),
                      algorithms=tuple(dict.fromkeys(args.algo)), name="simulate")
    _check_points(spec, strict=True)
    return _run_and_write(spec, args)


def cmd_sweep(args):
    cfg = _resolve_config(args)
    spec = _make_spec(base=cfg, sweep_axis=args.axis, sweep_values=_parse_values(args.values),
                      algorithms=tuple(dict.fromkeys(args.algo)), name=f"sweep-{args.axis}")
    _check_points(spec, strict=False)
    return _run_and_write(spec, args)


def cmd_reproduce(args):
    try:
        preset = get_preset(args.preset, desk_scale=args.desk_scale)
    except KeyError as exc:
        raise CliError(f"config error: {exc.args[0]}", EXIT_CONFIG) from None
    cfg = _resolve_config(args, base=preset.base)
    spec = _make_spec(base=cfg, sweep_axis=preset.sweep_axis, sweep_values=preset.sweep_values,
                      algorithms=preset.algorithms, name=preset.name)
    _check_points(spec, strict=False)
    return _run_and_write(spec, args)


def check_report(cfg: SystemConfig, algorithms=ALGORITHMS) -> str:
    """Identifiability verdicts, minimum ``K`` and FLOP figures for ``cfg``."""
    lines = [f"M={cfg.M} L={cfg.L} N={cfg.N} K={cfg.K} P={cfg.P}",
             f"{'algorithm':<12} {'model':<5} {'verdict':<8} {'K_min':>6}  {'flops':>14}  requirement"]
    for algorithm in algorithms:
        if algorithm == "tals_lti":
            kind = "lti"
        elif algorithm in ("tals_sti", "hosvd_sti"):
            kind = "sti"
        else:
            kind = model_kind((algorithm,), cfg)
        ident = check_identifiability(cfg, algorithm, kind)
        verdict = "ok" if ident.ok else "VIOLATED"
        flops = flops_estimate(cfg, algorithm, 1, kind)
        unit = "total" if algorithm in ("hosvd_sti", "clairvoyant") else "per iter"
        lines.append(f"{algorithm:<12} {kind:<5} {verdict:<8} {ident.k_min:>6}  {flops:>14.6g}  "
                     f"{ident.requirement} ({unit} flops)")
    return "\n".join(lines) + "\n"


def cmd_check(args):
    cfg = _resolve_config(args)
    algos = tuple(dict.fromkeys(args.algo)) if args.algo else ALGORITHMS
    sys.stdout.write(check_report(cfg, algos))
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, matching the config-error code
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"risce: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
