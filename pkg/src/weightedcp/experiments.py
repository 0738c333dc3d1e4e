"""Simulation harness: data generation, size-corrected power curves, envelope power.

Every Monte Carlo loop runs through :func:`weightedcp.streams.run_blocks`, so a
curve depends only on its configuration and seed, never on the thread count.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from . import __version__
from .kernels import Kernel, NoiseModel, get_kernel, standard_normal
from .limits import QuantileEntry, QuantileTable, kappa
from .statistic import Sided, check_gamma, max_statistics, studentizing_scale
from .streams import DEFAULT_SEED, experiment_key, run_blocks


class ClampWarning(UserWarning):
    """The requested change point fell outside ``[1, n-1]`` and was clamped."""


@dataclass(frozen=True)
class ChangeLocation:
    k_star: int
    delta: float
    clamped: bool = False


@dataclass(frozen=True)
class Null:
    def locate(self, n: int) -> ChangeLocation:
        return ChangeLocation(0, 0.0)

    def describe(self) -> str:
        return "null"


@dataclass(frozen=True)
class A1:
    """Change after a fixed fraction ``tau_star`` with jump ``c / sqrt(n)``."""

    tau_star: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.tau_star < 1.0:
            raise ValueError("tau_star must lie strictly inside (0, 1)")

    def locate(self, n: int) -> ChangeLocation:
        raw = math.floor(self.tau_star * n)
        k = min(max(raw, 1), n - 1)
        return ChangeLocation(k, self.c / math.sqrt(n), k != raw)

    def describe(self) -> str:
        return f"A1(tau={self.tau_star:g},c={self.c:g})"


@dataclass(frozen=True)
class A2:
    """Fixed jump ``delta`` at ``k* = round(c n^kappa)``, ``kappa`` set by ``gamma_for_kappa``.

    ``c == 0`` means no change at all; otherwise ``k*`` is clamped to ``[1, n-1]``.
    """

    gamma_for_kappa: float
    c: float
    delta: float

    def __post_init__(self):
        check_gamma(self.gamma_for_kappa)
        if self.c < 0:
            raise ValueError("c must be non-negative")

    def locate(self, n: int) -> ChangeLocation:
        if self.c == 0:
            return ChangeLocation(0, 0.0)
        raw = round(self.c * n ** kappa(self.gamma_for_kappa))
        k = min(max(raw, 1), n - 1)
        return ChangeLocation(k, float(self.delta), k != raw)

    def describe(self) -> str:
        return f"A2(gamma={self.gamma_for_kappa:g},c={self.c:g},delta={self.delta:g})"


AlternativeSpec = Null | A1 | A2


def generate_series(
    n: int,
    noise: NoiseModel,
    alt: AlternativeSpec,
    mu: float = 0.0,
    rng: np.random.Generator | None = None,
    *,
    size: int | None = None,
) -> np.ndarray:
    """Noise plus a single step; ``size`` draws a ``(size, n)`` batch.

    Observations ``k*+1..n`` carry the jump. A :class:`ClampWarning` is
    issued when ``k*`` had to be moved into ``[1, n-1]``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = rng if rng is not None else np.random.default_rng()
    loc = alt.locate(n)
    if loc.clamped:
        warnings.warn(f"{alt.describe()} at n={n}: change point clamped to {loc.k_star}",
                      ClampWarning, stacklevel=2)
    shape = (n,) if size is None else (size, n)
    x = noise.sample(rng, shape) + mu
    if loc.delta:
        x[..., loc.k_star:] += loc.delta
    return x


def _stat_key(tag, n, kernel, noise, alt, sided, gammas):
    return experiment_key(tag, n, kernel.label, noise.name, alt.describe(), sided.value,
                          tuple(round(g, 9) for g in gammas))


def simulate_max_statistics(
    n: int,
    kernel: Kernel | str,
    gammas: Sequence[float],
    noise: NoiseModel,
    alt: AlternativeSpec,
    reps: int,
    *,
    sided: Sided | str = Sided.TWO_SIDED,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    common_random_numbers: bool = False,
) -> np.ndarray:
    """Max statistics under ``alt``, shape ``(reps, len(gammas))``.

    With ``common_random_numbers`` every gamma is evaluated on the same
    series; otherwise each gamma has its own stream.
    """
    kernel = get_kernel(kernel)
    sided = Sided.parse(sided)
    gammas = [check_gamma(g) for g in gammas]
    loc = alt.locate(n)

    def sim(gs):
        def block(rng, count):
            x = noise.sample(rng, (count, n))
            if loc.delta:
                x[:, loc.k_star:] += loc.delta
            return max_statistics(x, kernel, gs, sided)

        return run_blocks(block, reps, seed, _stat_key("stat", n, kernel, noise, alt, sided, gs),
                          threads)

    if common_random_numbers:
        return sim(gammas)
    return np.concatenate([sim([g]) for g in gammas], axis=1)


def empirical_critical_values(
    n: int,
    kernel: Kernel | str,
    gammas: Sequence[float],
    noise: NoiseModel,
    alphas: Sequence[float],
    reps: int,
    *,
    sided: Sided | str = Sided.TWO_SIDED,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
) -> QuantileTable:
    """Finite-sample ``(1 - alpha)``-quantiles of the raw max statistic under no change."""
    kernel = get_kernel(kernel)
    sided = Sided.parse(sided)
    null = simulate_max_statistics(n, kernel, gammas, noise, Null(), reps, sided=sided,
                                   seed=seed, threads=threads)
    table = QuantileTable(sided=sided, source="empirical",
                          metadata={"n": str(n), "kernel": kernel.label, "noise": noise.name,
                                    "reps": str(reps), "seed": str(seed)})
    for col, g in enumerate(gammas):
        qs = np.quantile(null[:, col], [1.0 - a for a in alphas])
        for a, q in zip(alphas, qs):
            table.add(g, a, QuantileEntry(float(q), float("nan"), int(reps), 0))
    return table


def empirical_critical_value(
    n: int,
    kernel: Kernel | str,
    gamma: float,
    noise: NoiseModel,
    alpha: float,
    reps: int,
    *,
    sided: Sided | str = Sided.TWO_SIDED,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
) -> float:
    if reps < 1000:
        warnings.warn(f"critical value from only {reps} null replications", stacklevel=2)
    table = empirical_critical_values(n, kernel, [gamma], noise, [alpha], reps, sided=sided,
                                      seed=seed, threads=threads)
    return table.lookup(gamma, alpha)


@dataclass
class PowerCurve:
    """Rejection rates along one abscissa (tau or c) for one gamma.

    ``gamma`` is ``None`` for an envelope curve.
    """

    abscissa: np.ndarray
    power: np.ndarray
    stderr: np.ndarray
    gamma: float | None
    config: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return "envelope" if self.gamma is None else f"{self.gamma:g}"


def _binom_se(p: np.ndarray, reps: int) -> np.ndarray:
    return np.sqrt(p * (1.0 - p) / reps)


def _critical_values(n, kernel, gammas, noise, alpha, *, sided, size_corrected, null_reps,
                     table, seed, threads):
    if size_corrected:
        emp = empirical_critical_values(n, kernel, gammas, noise, [alpha], null_reps,
                                        sided=sided, seed=seed, threads=threads)
        return np.array([emp.lookup(g, alpha) for g in gammas])
    if table is None:
        raise ValueError("an asymptotic table is required when size_corrected=False")
    scale = studentizing_scale(np.zeros(2), kernel, noise)
    return np.array([table.lookup(g, alpha) * scale for g in gammas])


def _power_curves(n, kernel, gammas, noise, alts, abscissa, alpha, reps, *, sided,
                  size_corrected, null_reps, table, seed, threads, common_random_numbers,
                  config):
    kernel = get_kernel(kernel)
    sided = Sided.parse(sided)
    gammas = [check_gamma(g) for g in gammas]
    crit = _critical_values(n, kernel, gammas, noise, alpha, sided=sided,
                            size_corrected=size_corrected, null_reps=null_reps or reps,
                            table=table, seed=seed, threads=threads)
    rates = np.empty((len(alts), len(gammas)))
    for row, alt in enumerate(alts):
        stat = simulate_max_statistics(n, kernel, gammas, noise, alt, reps, sided=sided,
                                       seed=seed, threads=threads,
                                       common_random_numbers=common_random_numbers)
        rates[row] = np.mean(stat > crit, axis=0)
    base = {
        "n": n, "kernel": kernel.label, "noise": noise.name, "alpha": alpha, "reps": reps,
        "null_reps": null_reps or reps, "sided": sided.value,
        "size_corrected": size_corrected, "seed": seed, "crn": common_random_numbers,
        **config,
    }
    abscissa = np.asarray(abscissa, dtype=float)
    return [
        PowerCurve(abscissa, rates[:, col], _binom_se(rates[:, col], reps), g,
                   {**base, "critical_value": float(crit[col])})
        for col, g in enumerate(gammas)
    ]


def power_curve_a1(
    n: int,
    kernel: Kernel | str,
    gammas: Sequence[float],
    c: float,
    tau_grid: Sequence[float],
    alpha: float,
    reps: int,
    *,
    noise: NoiseModel | None = None,
    sided: Sided | str = Sided.ONE_SIDED,
    size_corrected: bool = True,
    null_reps: int | None = None,
    table: QuantileTable | None = None,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    common_random_numbers: bool = False,
) -> list[PowerCurve]:
    """Rejection rate versus change fraction tau for jumps ``c / sqrt(n)``.

    Size-corrected curves compare against empirical null quantiles from
    ``null_reps`` (default ``reps``) replications; otherwise ``table`` quantiles
    scaled by the studentizing sigma are used. The default one-sided max
    matches the drifted limit of a positive jump.
    """
    noise = noise or standard_normal()
    if any(not 0 < t < 1 for t in tau_grid):
        raise ValueError("tau grid must lie inside (0, 1)")
    alts = [A1(float(t), float(c)) for t in tau_grid]
    return _power_curves(n, kernel, gammas, noise, alts, tau_grid, alpha, reps, sided=sided,
                         size_corrected=size_corrected, null_reps=null_reps, table=table,
                         seed=seed, threads=threads,
                         common_random_numbers=common_random_numbers,
                         config={"regime": "A1", "c": c, "delta": c / math.sqrt(n)})


def power_curve_a2(
    n: int,
    kernel: Kernel | str,
    gammas: Sequence[float],
    delta: float,
    kappa_source_gamma: float,
    c_grid: Sequence[float],
    alpha: float,
    reps: int,
    *,
    noise: NoiseModel | None = None,
    sided: Sided | str = Sided.TWO_SIDED,
    size_corrected: bool = True,
    null_reps: int | None = None,
    table: QuantileTable | None = None,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    common_random_numbers: bool = False,
) -> list[PowerCurve]:
    """Rejection rate versus ``c`` for a fixed jump at ``k* = round(c n^kappa)``."""
    noise = noise or standard_normal()
    if any(c < 0 for c in c_grid):
        raise ValueError("c grid must be non-negative")
    alts = [A2(kappa_source_gamma, float(c), float(delta)) for c in c_grid]
    locs = [a.locate(n) for a in alts]
    clamps = sum(loc.clamped for loc in locs)
    if clamps:
        warnings.warn(f"{clamps} change points clamped into [1, {n - 1}]", ClampWarning,
                      stacklevel=2)
    return _power_curves(n, kernel, gammas, noise, alts, c_grid, alpha, reps, sided=sided,
                         size_corrected=size_corrected, null_reps=null_reps, table=table,
                         seed=seed, threads=threads,
                         common_random_numbers=common_random_numbers,
                         config={"regime": "A2", "delta": delta,
                                 "kappa_gamma": kappa_source_gamma,
                                 "kappa": kappa(kappa_source_gamma),
                                 "k_star": " ".join(str(loc.k_star) for loc in locs),
                                 "clamped": clamps})


def envelope_power(n: int, k, delta: float, sigma: float = 1.0, alpha: float = 0.05):
    """Power of the most powerful level-``alpha`` test against a known change ``(k, delta)``.

    ``1 - Phi(z_{1-alpha} - delta sqrt(k (n - k) / (n sigma^2)))``; ``k`` may be an array.
    """
    ks = np.asarray(k)
    if np.any(ks < 1) or np.any(ks > n - 1):
        raise ValueError(f"k must lie in [1, {n - 1}]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = stats.norm.ppf(1.0 - alpha)
    shift = delta * np.sqrt(ks * (n - ks) / (n * sigma**2))
    out = special.ndtr(shift - z)
    return float(out) if out.ndim == 0 else out


def envelope_curve(
    n: int, delta: float, tau_grid: Sequence[float], sigma: float = 1.0, alpha: float = 0.05
) -> PowerCurve:
    """Envelope power at ``k = floor(tau n)`` for each tau (clamped into ``[1, n-1]``)."""
    taus = np.asarray(tau_grid, dtype=float)
    ks = np.clip(np.floor(taus * n).astype(int), 1, n - 1)
    power = np.atleast_1d(envelope_power(n, ks, delta, sigma, alpha))
    return PowerCurve(taus, power, np.zeros_like(power), None,
                      {"n": n, "delta": delta, "sigma": sigma, "alpha": alpha})


def overall_power_ratio(curve: PowerCurve, envelope: PowerCurve) -> float:
    """Area under ``curve`` as a percentage of the area under ``envelope`` (trapezoid rule)."""
    if curve.abscissa.shape != envelope.abscissa.shape or not np.allclose(
            curve.abscissa, envelope.abscissa, rtol=0, atol=1e-12):
        raise ValueError("curve and envelope must share the same abscissa grid")
    if curve.abscissa.size < 2:
        raise ValueError("an area needs at least two abscissa points")
    return float(100.0 * np.trapezoid(curve.power, curve.abscissa)
                 / np.trapezoid(envelope.power, envelope.abscissa))


def tau_grid(points: int = 39) -> np.ndarray:
    """Equispaced interior grid ``0.025, 0.05, ..., 0.975`` for the default 39 points."""
    return np.arange(1, points + 1) / (points + 1)


def curves_to_csv(
    curves: Sequence[PowerCurve],
    path: str | Path | None = None,
    metadata: dict | None = None,
    abscissa_name: str = "abscissa",
    group: str | None = None,
) -> str:
    """One row per (curve, abscissa) point, preceded by ``#`` metadata lines.

    ``group`` names a config key written as a leading column, e.g. ``"c"``
    when curves for several jump heights share one file.
    """
    buf = io.StringIO()
    meta = {"version": __version__, **(metadata or {})}
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    for c in curves:
        crit = c.config.get("critical_value")
        if crit is not None:
            tag = f"{group}={c.config[group]:g}," if group else ""
            buf.write(f"# critical_value[{tag}gamma={c.label}]: {crit:.6f}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(([group] if group else []) + ["gamma", abscissa_name, "power", "stderr"])
    for c in curves:
        lead = [f"{c.config[group]:g}"] if group else []
        for x, p, s in zip(c.abscissa, c.power, c.stderr):
            writer.writerow(lead + [c.label, f"{x:.6g}", f"{p:.6f}", f"{s:.6f}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_grid(text: str) -> list[float]:
    """Parse ``"a,b,c"`` or ``"start:stop:count"`` (inclusive linspace)."""
    text = text.strip()
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
    return [float(v) for v in text.replace(" ", "").split(",") if v]


CONFIG_KEYS = {
    "n": int, "kernel": str, "gammas": parse_grid, "alpha": float, "reps": int,
    "null_reps": int, "regime": str, "tau_grid": parse_grid, "c_grid": parse_grid,
    "c": float, "delta": float, "kappa_gamma": float, "sided": str, "seed": int,
    "threads": int, "crn": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "sigma": float,
}


def load_config(path: str | Path) -> dict:
    """Read a flat ``key = value`` experiment file; ``#`` starts a comment."""
    cfg: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        key = key.strip().lower()
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unrecognized line {raw!r}")
        try:
            cfg[key] = CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return cfg
