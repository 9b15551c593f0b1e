"""Command-line interface.

Subcommands: simulate, fit, fit-additive, benchmark, noncross. Flags map
1:1 to RunConfig fields; a key=value config file supplies defaults that
explicit flags override; SPLINEQR_OUT_DIR sets the default output
directory. Exit codes: 0 ok, 2 usage, 3 unreadable file, 4 malformed data,
5 invalid configuration or data invariants, 6 infeasible noncrossing
constraint, 7 degenerate chain.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import runner
from .errors import (
    ChainDiagnosticError,
    ConstraintInfeasibleError,
    DataFormatError,
    InvalidInputError,
    SplineQRError,
)

EXIT_UNREADABLE = 3
EXIT_MALFORMED = 4
EXIT_INVALID = 5
EXIT_INFEASIBLE = 6
EXIT_DIAGNOSTIC = 7

_CONFIG_KEYS = {
    "quantiles": str,
    "degree": int,
    "lam": float,
    "max_knots": int,
    "n_x": int,
    "boundaries": str,
    "n_intervals": int,
    "exclude_edge_intervals": bool,
    "basis": str,
    "n_tune": int,
    "n_burn": int,
    "n_record": int,
    "z_steps_per_gamma": int,
    "seed": int,
    "grid_size": int,
    "chain_verbose": bool,
    "jobs": int,
}


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"cannot parse {text!r} as a boolean")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(" ", "").split(",") if tok)
    except ValueError:
        raise InvalidInputError(f"cannot parse {text!r} as comma-separated numbers")


def read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; unknown keys are rejected."""
    out: dict = {}
    raw = Path(path).read_text()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataFormatError(f"{path}: line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise DataFormatError(f"{path}: line {lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        if kind is bool:
            out[key] = _parse_bool(value)
        elif kind in (int, float):
            try:
                out[key] = kind(value)
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: cannot parse {value!r} for {key}"
                )
        else:
            out[key] = value
    return out


def _add_model_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file (flags override)")
    sub.add_argument("--quantiles", help="comma-separated levels in (0,1)")
    sub.add_argument("--degree", type=int, help="spline degree P (default 2)")
    sub.add_argument("--lam", type=float, help="knot-count prior mean (default 3)")
    sub.add_argument("--max-knots", type=int, help="knot-count cap L (default 10)")
    sub.add_argument("--n-x", type=int, help="sorted x values per interval (default 5)")
    sub.add_argument("--boundaries", help="explicit interval edges, comma-separated")
    sub.add_argument("--n-intervals", type=int, help="equal-width interval count")
    sub.add_argument(
        "--exclude-edge-intervals",
        action="store_const",
        const=True,
        default=None,
        help="forbid knots in the first and last intervals",
    )
    sub.add_argument("--basis", choices=["bspline", "truncated_power"])
    sub.add_argument("--n-tune", type=int, help="tuning iterations (default 500)")
    sub.add_argument("--n-burn", type=int, help="burn-in iterations (default 500)")
    sub.add_argument("--n-record", type=int, help="recorded iterations (default 1500)")
    sub.add_argument(
        "--z-steps", type=int, dest="z_steps_per_gamma",
        help="indicator moves per iteration (default 20)",
    )
    sub.add_argument("--seed", type=int, help="master seed (default 0)")
    sub.add_argument("--grid-size", type=int, help="curve grid points (default 200)")
    sub.add_argument(
        "--chain-verbose",
        action="store_const",
        const=True,
        default=None,
        help="include the full w vector in chain records",
    )
    sub.add_argument("--jobs", type=int, help="parallel replicate workers")
    sub.add_argument("--out-dir", help="output directory (or $SPLINEQR_OUT_DIR)")


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True, help="input CSV path")
    sub.add_argument("--y-col", help="response column (default 'y' or last)")
    sub.add_argument(
        "--x-col", action="append", dest="x_cols",
        help="covariate column (repeatable; default: all non-response columns)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splineqr",
        description="Bayesian quantile regression with free-knot splines",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="write a synthetic benchmark dataset")
    sim.add_argument("--example", type=int, required=True, choices=[1, 2, 3])
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n", type=int, help="override the standard sample size")
    sim.add_argument("--out", required=True, help="output CSV path")

    fit = subs.add_parser("fit", help="fit quantile curves to one covariate")
    _add_data_flags(fit)
    _add_model_flags(fit)

    fam = subs.add_parser("fit-additive", help="fit an additive quantile model")
    _add_data_flags(fam)
    _add_model_flags(fam)

    ben = subs.add_parser("benchmark", help="replicate a simulated-example fit")
    ben.add_argument("--example", type=int, required=True, choices=[1, 2, 3])
    ben.add_argument("--replicates", type=int, required=True)
    _add_model_flags(ben)

    ncr = subs.add_parser("noncross", help="noncrossing curves for two levels")
    _add_data_flags(ncr)
    ncr.add_argument("--p1", type=float, required=True)
    ncr.add_argument("--p2", type=float, required=True)
    ncr.add_argument(
        "--combination", choices=["auto", "aligned", "cartesian"], default="auto"
    )
    _add_model_flags(ncr)
    return parser


def _resolve_config(args: argparse.Namespace) -> runner.RunConfig:
    """defaults < config file < explicit flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if isinstance(merged.get("quantiles"), str):
        merged["quantiles"] = _parse_floats(merged["quantiles"])
    if isinstance(merged.get("boundaries"), str):
        merged["boundaries"] = _parse_floats(merged["boundaries"])
    return runner.RunConfig(**merged)


def _resolve_out_dir(args: argparse.Namespace) -> Path:
    out = getattr(args, "out_dir", None) or os.environ.get("SPLINEQR_OUT_DIR")
    if not out:
        raise InvalidInputError(
            "no output directory: pass --out-dir or set SPLINEQR_OUT_DIR"
        )
    return Path(out)


def _load_table(args: argparse.Namespace) -> runner.DatasetTable:
    try:
        return runner.read_table(args.data, y_col=args.y_col, x_cols=args.x_cols)
    except OSError as exc:
        raise _Unreadable(f"cannot read {args.data}: {exc}")


class _Unreadable(Exception):
    pass


def _run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    if args.command == "simulate":
        data = runner.generate_example(args.example, args.seed, n=args.n)
        try:
            runner.write_dataset_csv(args.out, data)
        except OSError as exc:
            raise _Unreadable(f"cannot write {args.out}: {exc}")
        written = [Path(args.out)]
    elif args.command == "fit":
        cfg = _resolve_config(args)
        written = runner.fit_command(_load_table(args), cfg, _resolve_out_dir(args))
    elif args.command == "fit-additive":
        cfg = _resolve_config(args)
        written = runner.fit_additive_command(
            _load_table(args), cfg, _resolve_out_dir(args)
        )
    elif args.command == "benchmark":
        cfg = _resolve_config(args)
        written = runner.benchmark_command(
            args.example, args.replicates, cfg, _resolve_out_dir(args)
        )
    elif args.command == "noncross":
        cfg = _resolve_config(args)
        written = runner.noncross_command(
            _load_table(args), cfg, args.p1, args.p2, _resolve_out_dir(args),
            combination=args.combination,
        )
    else:  # pragma: no cover - argparse enforces the choices
        raise InvalidInputError(f"unknown command {args.command!r}")
    elapsed = time.perf_counter() - start
    for path in written:
        print(path)
    print(f"done in {elapsed:.1f}s", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except _Unreadable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except ConstraintInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ChainDiagnosticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except (InvalidInputError, SplineQRError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
