"""Command-line entry point.

Subcommands: ``test``, ``quantiles``, ``power-a1``, ``power-a2``, ``envelope``.
Exit status is 0 when the command completed; a rejected hypothesis is data,
not an error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    curves_to_csv,
    envelope_curve,
    load_config,
    overall_power_ratio,
    parse_grid,
    power_curve_a1,
    power_curve_a2,
    tau_grid,
)
from .kernels import get_kernel, standard_normal
from .limits import BridgeGrid, QuantileTable, build_quantile_table, published_quantiles
from .statistic import TableMissError, check_gamma, run_test
from .streams import DEFAULT_SEED

EXIT_USAGE = 2
EXIT_UNREADABLE = 3
EXIT_INVALID_INPUT = 4
EXIT_TOO_SHORT = 5
EXIT_TABLE_MISS = 6


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


def read_series(path: str | Path) -> np.ndarray:
    """Read one numeric column; a single non-numeric first line is taken as a header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_UNREADABLE) from None
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    values = []
    for lineno, row in enumerate(rows, 1):
        if len(row) != 1:
            raise CliError(f"{path}:{lineno}: expected a single column", EXIT_INVALID_INPUT)
        try:
            v = float(row[0])
        except ValueError:
            if lineno == 1:
                continue
            raise CliError(f"{path}:{lineno}: non-numeric value {row[0]!r}",
                           EXIT_INVALID_INPUT) from None
        if not math.isfinite(v):
            raise CliError(f"{path}:{lineno}: non-finite value", EXIT_INVALID_INPUT)
        values.append(v)
    if not values:
        raise CliError(f"{path}: no observations", EXIT_INVALID_INPUT)
    if len(values) < 2:
        raise CliError(f"{path}: need at least two observations", EXIT_TOO_SHORT)
    return np.asarray(values)


def _floats(text: str) -> list[float]:
    return parse_grid(text)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _meta(args, **extra) -> dict:
    meta = {"command": args.command, "seed": args.seed}
    meta.update(extra)
    return meta


def cmd_test(args) -> int:
    x = read_series(args.input)
    kernel = get_kernel(args.kernel)
    if args.table:
        try:
            table = QuantileTable.from_csv(args.table)
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"cannot load table {args.table}: {exc}", EXIT_UNREADABLE) from None
    else:
        table = published_quantiles()
    noise = standard_normal() if args.known_sigma else None
    try:
        outcome = run_test(x, kernel, args.gamma, args.alpha, table, noise=noise,
                           sigma=args.sigma, sided=args.sided)
    except TableMissError as exc:
        raise CliError(str(exc.args[0]), EXIT_TABLE_MISS) from None
    print(f"n = {x.size}")
    print(f"kernel = {outcome.kernel}")
    print(f"gamma = {outcome.gamma:g}")
    print(f"alpha = {outcome.alpha:g}")
    print(f"sided = {outcome.sided.value}")
    print(f"scale = {outcome.scale:.6g}")
    print(f"statistic = {outcome.statistic:.6f}")
    print(f"critical_value = {outcome.critical_value:.6f}")
    print(f"reject = {str(outcome.reject).lower()}")
    print(f"k_hat = {outcome.estimated_changepoint}")
    if args.profile_out:
        lines = [f"# version: {__version__}", f"# kernel: {outcome.kernel}",
                 f"# gamma: {outcome.gamma:g}", "k,G"]
        lines += [f"{k},{v:.10g}" for k, v in enumerate(outcome.profile.values, 1)]
        Path(args.profile_out).write_text("\n".join(lines) + "\n")
    return 0


def cmd_quantiles(args) -> int:
    grid = BridgeGrid(args.grid_m)
    table = build_quantile_table(args.gammas, args.alphas, args.reps, grid, sided=args.sided,
                                 seed=args.seed, threads=args.threads)
    table.metadata = {"version": __version__, **table.metadata, "threads_independent": "true"}
    _emit(table.to_csv(), args.out)
    return 0


def _apply_config(args, keys) -> None:
    if not getattr(args, "config", None):
        return
    cfg = load_config(args.config)
    rename = {"gammas": "gammas", "tau_grid": "taus", "c_grid": "c_grid"}
    for key, value in cfg.items():
        dest = rename.get(key, key)
        if dest == "c" and isinstance(getattr(args, "c", None), list):
            value = [value]
        if dest in keys:
            setattr(args, dest, value)


def _validate_common(args) -> None:
    if args.n < 2:
        raise CliError("n must be at least 2", EXIT_USAGE)
    for g in args.gammas:
        check_gamma(g)
    if not 0 < args.alpha < 1:
        raise CliError("alpha must lie in (0, 1)", EXIT_USAGE)
    if args.reps < 1:
        raise CliError("reps must be positive", EXIT_USAGE)


POWER_KEYS = {"n", "kernel", "gammas", "alpha", "reps", "null_reps", "taus", "c_grid", "c",
              "delta", "kappa_gamma", "sided", "seed", "threads", "crn", "sigma"}


def cmd_power_a1(args) -> int:
    _apply_config(args, POWER_KEYS)
    _validate_common(args)
    taus = args.taus or list(tau_grid())
    meta = _meta(args, regime="A1", n=args.n, kernel=args.kernel, alpha=args.alpha,
                 reps=args.reps, null_reps=args.null_reps or args.reps, sided=args.sided,
                 crn=args.crn)
    everything = []
    for c in args.c:
        curves = power_curve_a1(args.n, args.kernel, args.gammas, c, taus, args.alpha,
                                args.reps, sided=args.sided, null_reps=args.null_reps,
                                seed=args.seed, threads=args.threads,
                                common_random_numbers=args.crn)
        env = envelope_curve(args.n, c / math.sqrt(args.n), taus, sigma=args.sigma,
                             alpha=args.alpha)
        env.config["c"] = c
        for cv in curves if len(taus) > 1 else []:
            meta[f"overall_power[c={c:g},gamma={cv.label}]"] = \
                f"{overall_power_ratio(cv, env):.2f}%"
        everything += curves + [env]
    _emit(curves_to_csv(everything, None, meta, "tau", group="c"), args.out)
    return 0


def cmd_power_a2(args) -> int:
    _apply_config(args, POWER_KEYS)
    _validate_common(args)
    c_grid = args.c_grid
    if c_grid is None:
        top = 50.0 / 5000 ** (2.0 / 7.0)
        c_grid = [top * t for t in np.linspace(0.0, 1.0, 21)]
    curves = power_curve_a2(args.n, args.kernel, args.gammas, args.delta, args.kappa_gamma,
                            c_grid, args.alpha, args.reps, sided=args.sided,
                            null_reps=args.null_reps, seed=args.seed, threads=args.threads,
                            common_random_numbers=args.crn)
    meta = _meta(args, regime="A2", n=args.n, kernel=args.kernel, alpha=args.alpha,
                 reps=args.reps, null_reps=args.null_reps or args.reps, delta=args.delta,
                 kappa_gamma=args.kappa_gamma, sided=args.sided, crn=args.crn,
                 k_star=curves[0].config["k_star"], clamped=curves[0].config["clamped"])
    _emit(curves_to_csv(curves, None, meta, "c"), args.out)
    return 0


def cmd_envelope(args) -> int:
    if args.n < 2:
        raise CliError("n must be at least 2", EXIT_USAGE)
    if args.sigma <= 0:
        raise CliError("sigma must be positive", EXIT_USAGE)
    taus = args.taus or list(tau_grid())
    delta = args.delta if args.delta is not None else args.c / math.sqrt(args.n)
    env = envelope_curve(args.n, delta, taus, args.sigma, args.alpha)
    meta = _meta(args, n=args.n, delta=delta, sigma=args.sigma, alpha=args.alpha)
    _emit(curves_to_csv([env], None, meta, "tau"), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="output path (default: stdout)")

    parser = argparse.ArgumentParser(prog="weightedcp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common], help="test a series for a change in location")
    p.add_argument("input", help="single-column CSV of observations")
    p.add_argument("--kernel", default="cusum", choices=["cusum", "wilcoxon"])
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sided", default="max", choices=["max", "maxabs"])
    p.add_argument("--table", default=None, help="quantile table CSV (default: built-in)")
    p.add_argument("--sigma", type=float, default=None, help="known noise scale")
    p.add_argument("--known-sigma", action="store_true",
                   help="assume unit-variance noise instead of the sample standard deviation")
    p.add_argument("--profile-out", default=None, help="write the k -> G(k) profile here")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("quantiles", parents=[common], help="simulate weighted bridge-sup quantiles")
    p.add_argument("--gammas", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4])
    p.add_argument("--alphas", type=_floats, default=[0.1, 0.05, 0.01])
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--grid-m", type=int, default=10_000)
    p.add_argument("--sided", default="max", choices=["max", "maxabs"])
    p.set_defaults(func=cmd_quantiles)

    for name, func in (("power-a1", cmd_power_a1), ("power-a2", cmd_power_a2)):
        p = sub.add_parser(name, parents=[common], help=f"size-corrected power curves ({name})")
        p.add_argument("--config", default=None, help="key = value experiment file")
        p.add_argument("--n", type=int, default=1000 if name == "power-a1" else 5000)
        p.add_argument("--kernel", default="cusum", choices=["cusum", "wilcoxon"])
        p.add_argument("--gammas", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4])
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--reps", type=int, default=5000 if name == "power-a1" else 500)
        p.add_argument("--null-reps", dest="null_reps", type=int, default=None)
        p.add_argument("--sided", default="max" if name == "power-a1" else "maxabs",
                       choices=["max", "maxabs"])
        p.add_argument("--crn", action="store_true", help="common random numbers across gammas")
        p.add_argument("--sigma", type=float, default=1.0)
        if name == "power-a1":
            p.add_argument("--c", type=_floats, default=[5.0, 7.0, 9.0],
                           help="jump heights in units of 1/sqrt(n)")
            p.add_argument("--taus", type=_floats, default=None)
        else:
            p.add_argument("--delta", type=float, default=1.0)
            p.add_argument("--kappa-gamma", dest="kappa_gamma", type=float, default=0.3)
            p.add_argument("--c-grid", dest="c_grid", type=_floats, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("envelope", parents=[common], help="envelope power curve (no simulation)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--c", type=float, default=5.0, help="jump height in units of 1/sqrt(n)")
    p.add_argument("--delta", type=float, default=None, help="absolute jump (overrides --c)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--taus", type=_floats, default=None)
    p.set_defaults(func=cmd_envelope)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
