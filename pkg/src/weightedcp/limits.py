"""Monte Carlo samplers for the limit laws of the weighted statistic.

Bridges are simulated on the uniform grid ``lambda_i = i/m`` by the random
walk construction ``W0(lambda) = W(lambda) - lambda W(1)``, which has the
exact Brownian bridge finite-dimensional law at the grid points. Endpoints are
dropped for weighted suprema, so the discretized sup is biased slightly
downward.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .statistic import Sided, TableMissError, check_gamma
from .streams import DEFAULT_SEED, experiment_key, run_blocks


def kappa(gamma: float) -> float:
    """Boundary rate exponent ``(1 - 2 gamma) / (2 (1 - gamma))``."""
    g = check_gamma(gamma)
    return (1.0 - 2.0 * g) / (2.0 * (1.0 - g))


@dataclass(frozen=True)
class BridgeGrid:
    m: int = 10_000

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 100:
            raise ValueError(f"grid needs an integer m >= 100, got {self.m}")

    @property
    def lambdas(self) -> np.ndarray:
        """Interior grid points ``i/m`` for ``i = 1..m-1``."""
        return np.arange(1, self.m) / self.m


def sample_bridges(grid: BridgeGrid, size: int, rng: np.random.Generator) -> np.ndarray:
    """Brownian bridge values at the interior grid points, shape ``(size, m-1)``."""
    m = grid.m
    walk = np.cumsum(rng.standard_normal((size, m)), axis=1)
    walk /= math.sqrt(m)
    return walk[:, :-1] - grid.lambdas * walk[:, -1:]


def _weight(grid: BridgeGrid, gamma: float) -> np.ndarray:
    lam = grid.lambdas
    return (lam * (1.0 - lam)) ** (-check_gamma(gamma))


def _sup(values: np.ndarray, sided: Sided) -> np.ndarray:
    if sided is Sided.TWO_SIDED:
        values = np.abs(values)
    return values.max(axis=-1)


def sample_weighted_bridge_sup(
    gamma: float,
    grid: BridgeGrid,
    rng: np.random.Generator,
    *,
    sided: Sided | str = Sided.ONE_SIDED,
    size: int | None = None,
):
    """Draw(s) of ``sup W0(lambda) / (lambda (1 - lambda))^gamma`` over the grid."""
    sided = Sided.parse(sided)
    paths = sample_bridges(grid, 1 if size is None else size, rng)
    out = _sup(paths * _weight(grid, gamma), sided)
    return float(out[0]) if size is None else out


def sample_bridge_sup_continuous(
    grid: BridgeGrid, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Exact draws of the continuous one-sided sup of an unweighted bridge.

    Given the grid values ``a, b`` at the ends of an interval of length
    ``h = 1/m``, the bridge maximum over that interval has tail
    ``exp(-2 (y - a)(y - b) / h)`` and is drawn by inversion, so no
    discretization bias remains.
    """
    paths = sample_bridges(grid, size, rng)
    zeros = np.zeros((size, 1))
    full = np.concatenate([zeros, paths, zeros], axis=1)
    a, b = full[:, :-1], full[:, 1:]
    h = 1.0 / grid.m
    u = rng.random(a.shape)
    peak = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * h * np.log1p(-u)))
    return peak.max(axis=1)


def bridge_sup_tail(x: float) -> float:
    """Exact ``P(sup W0 > x) = exp(-2 x^2)`` for the unweighted one-sided sup."""
    return math.exp(-2.0 * x * x) if x > 0 else 1.0


@dataclass(frozen=True)
class QuantileEntry:
    quantile: float
    stderr: float
    reps: int
    grid_m: int


def _key(gamma: float, alpha: float) -> tuple[float, float]:
    return round(float(gamma), 9), round(float(alpha), 9)


@dataclass
class QuantileTable:
    """Critical values indexed by ``(gamma, alpha)``.

    ``source`` is ``"asymptotic"`` for quantiles of the standardized limit and
    ``"empirical"`` for finite-sample tables of the raw statistic.
    """

    entries: dict[tuple[float, float], QuantileEntry] = field(default_factory=dict)
    sided: Sided = Sided.ONE_SIDED
    source: str = "asymptotic"
    metadata: dict[str, str] = field(default_factory=dict)

    def add(self, gamma: float, alpha: float, entry: QuantileEntry) -> None:
        self.entries[_key(gamma, alpha)] = entry

    def entry(self, gamma: float, alpha: float) -> QuantileEntry:
        try:
            return self.entries[_key(gamma, alpha)]
        except KeyError:
            raise TableMissError(
                f"no critical value for gamma={gamma}, alpha={alpha} "
                f"(available: {sorted(self.entries)})") from None

    def lookup(self, gamma: float, alpha: float) -> float:
        return self.entry(gamma, alpha).quantile

    @property
    def gammas(self) -> list[float]:
        return sorted({g for g, _ in self.entries})

    @property
    def alphas(self) -> list[float]:
        return sorted({a for _, a in self.entries})

    def to_csv(self, path: str | Path | None = None) -> str:
        """Serialize with ``#`` metadata lines; returns the text and writes it if ``path``."""
        buf = io.StringIO()
        meta = {"sided": self.sided.value, "source": self.source, **self.metadata}
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gamma", "alpha", "quantile", "stderr", "reps", "grid_m"])
        for (g, a), e in sorted(self.entries.items()):
            writer.writerow([f"{g:g}", f"{a:g}", f"{e.quantile:.6f}", f"{e.stderr:.6f}",
                             e.reps, e.grid_m])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "QuantileTable":
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text: str) -> "QuantileTable":
        meta: dict[str, str] = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line.strip():
                rows.append(line)
        table = cls(sided=Sided.parse(meta.pop("sided", "max")),
                    source=meta.pop("source", "asymptotic"), metadata=meta)
        for rec in csv.DictReader(rows):
            table.add(float(rec["gamma"]), float(rec["alpha"]), QuantileEntry(
                float(rec["quantile"]), float(rec["stderr"]), int(rec["reps"]),
                int(rec["grid_m"])))
        return table


def published_quantiles() -> QuantileTable:
    """The one-sided weighted bridge-sup quantiles commonly tabulated (10^4 reps)."""
    values = {
        0.0: (1.05, 1.20, 1.51),
        0.1: (1.24, 1.41, 1.72),
        0.2: (1.45, 1.63, 2.05),
        0.3: (1.75, 1.96, 2.40),
        0.4: (2.10, 2.31, 2.83),
    }
    table = QuantileTable(metadata={"origin": "published"})
    for g, qs in values.items():
        for a, q in zip((0.1, 0.05, 0.01), qs):
            table.add(g, a, QuantileEntry(q, float("nan"), 10_000, 0))
    return table


def quantile_stderr(
    sample: np.ndarray, probs: Sequence[float], rng: np.random.Generator, n_boot: int = 200
) -> np.ndarray:
    """Bootstrap standard errors of type-7 quantiles at ``probs``."""
    sample = np.asarray(sample)
    boots = np.empty((n_boot, len(probs)))
    for b in range(n_boot):
        resample = sample[rng.integers(0, sample.size, sample.size)]
        boots[b] = np.quantile(resample, probs)
    return boots.std(axis=0, ddof=1)


def simulate_bridge_sups(
    gammas: Sequence[float],
    reps: int,
    grid: BridgeGrid,
    *,
    sided: Sided | str = Sided.ONE_SIDED,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
) -> np.ndarray:
    """Weighted sups for every gamma from shared paths, shape ``(reps, len(gammas))``."""
    sided = Sided.parse(sided)
    ws = [_weight(grid, g) for g in gammas]

    def block(rng, count):
        paths = sample_bridges(grid, count, rng)
        if sided is Sided.TWO_SIDED:
            np.abs(paths, out=paths)
        return np.stack([(paths * w).max(axis=1) for w in ws], axis=1)

    return run_blocks(block, reps, seed, experiment_key("bridge-sup", grid.m), threads)


def build_quantile_table(
    gammas: Sequence[float],
    alphas: Sequence[float],
    reps: int,
    grid: BridgeGrid | None = None,
    *,
    sided: Sided | str = Sided.ONE_SIDED,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    n_boot: int = 200,
) -> QuantileTable:
    """Empirical ``(1 - alpha)``-quantiles of the weighted bridge sup.

    Below 1000 replications the table is still built but a warning is issued
    and ``metadata["high_stderr"]`` is set.
    """
    grid = grid or BridgeGrid()
    sided = Sided.parse(sided)
    gammas = [check_gamma(g) for g in gammas]
    for a in alphas:
        if not 0 < a < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {a}")
    if reps < 2:
        raise ValueError("need at least two replications")
    sups = simulate_bridge_sups(gammas, reps, grid, sided=sided, seed=seed, threads=threads)
    probs = [1.0 - a for a in alphas]
    boot_rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(experiment_key("bootstrap", grid.m),))))
    meta = {"reps": str(reps), "grid_m": str(grid.m), "seed": str(seed)}
    if reps < 1000:
        warnings.warn(f"only {reps} replications; quantile standard errors are large",
                      stacklevel=2)
        meta["high_stderr"] = "true"
    table = QuantileTable(sided=sided, source="asymptotic", metadata=meta)
    for col, g in enumerate(gammas):
        qs = np.quantile(sups[:, col], probs)
        ses = quantile_stderr(sups[:, col], probs, boot_rng, n_boot)
        for a, q, se in zip(alphas, qs, ses):
            table.add(g, a, QuantileEntry(float(q), float(se), int(reps), grid.m))
    return table


def phi_tau(lam, tau: float) -> np.ndarray:
    """Tent drift ``lambda (1 - tau)`` left of ``tau`` and ``tau (1 - lambda)`` right of it."""
    lam = np.asarray(lam, dtype=float)
    return np.where(lam <= tau, lam * (1.0 - tau), tau * (1.0 - lam))


@dataclass(frozen=True)
class A1LimitSpec:
    gamma: float
    tau_star: float
    c_g: float
    sigma: float = 1.0

    def __post_init__(self):
        check_gamma(self.gamma)
        if not 0.0 < self.tau_star < 1.0:
            raise ValueError("tau_star must lie strictly inside (0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class A2LimitSpec:
    gamma: float
    c: float
    u_delta: float
    sigma: float = 1.0

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def kappa(self) -> float:
        return kappa(self.gamma)


def _draws(make, size, rng):
    out = make(1 if size is None else size, rng)
    return float(out[0]) if size is None else out


def sample_limit_a1(
    spec: A1LimitSpec,
    grid: BridgeGrid,
    rng: np.random.Generator,
    *,
    size: int | None = None,
    sided: Sided | str = Sided.ONE_SIDED,
):
    """Draw(s) of ``sup w(lambda) [sigma W0 + c_g phi_tau(lambda)]``."""
    sided = Sided.parse(sided)
    w = _weight(grid, spec.gamma)
    drift = spec.c_g * phi_tau(grid.lambdas, spec.tau_star)

    def make(count, gen):
        if spec.sigma == 0:
            return np.full(count, _sup((drift * w)[None, :], sided)[0])
        return _sup((spec.sigma * sample_bridges(grid, count, gen) + drift) * w, sided)

    return _draws(make, size, rng)


def sample_limit_a2_unweighted(
    spec: A2LimitSpec,
    grid: BridgeGrid,
    rng: np.random.Generator,
    *,
    size: int | None = None,
):
    """Draw(s) of ``sup |sigma W0(lambda) + c (1 - lambda) u(delta)|`` (gamma = 0)."""
    if spec.gamma != 0:
        raise ValueError("unweighted boundary limit requires gamma = 0; "
                         "use sample_limit_a2_weighted")
    # lambda = 0 is admissible here: no weight, W0(0) = 0
    lam = np.concatenate([[0.0], grid.lambdas])
    drift = spec.c * (1.0 - lam) * spec.u_delta

    def make(count, gen):
        if spec.sigma == 0:
            return np.full(count, np.abs(drift).max())
        paths = np.concatenate([np.zeros((count, 1)), sample_bridges(grid, count, gen)], axis=1)
        return np.abs(spec.sigma * paths + drift).max(axis=1)

    return _draws(make, size, rng)


def sample_limit_a2_weighted(
    spec: A2LimitSpec,
    grid: BridgeGrid,
    rng: np.random.Generator,
    *,
    size: int | None = None,
):
    """Draw(s) of ``max(c^{1-gamma} u(delta), sigma sup |W0| / (lambda(1-lambda))^gamma)``."""
    if not 0 < spec.gamma < 0.5:
        raise ValueError("weighted boundary limit requires 0 < gamma < 1/2; "
                         "use sample_limit_a2_unweighted")
    atom = spec.c ** (1.0 - spec.gamma) * spec.u_delta
    w = _weight(grid, spec.gamma)

    def make(count, gen):
        if spec.sigma == 0:
            return np.full(count, max(atom, 0.0))
        sup = spec.sigma * (np.abs(sample_bridges(grid, count, gen)) * w).max(axis=1)
        return np.maximum(atom, sup)

    return _draws(make, size, rng)


def consistency_threshold(gamma: float, q_alpha: float, u_delta: float) -> float:
    """Boundary constant ``(q_alpha / u(delta))^{1/(1-gamma)}``.

    Changes at ``k* ~ c n^kappa`` with ``c`` above it are detected with
    asymptotic probability one; below it the power tends to ``alpha``.
    """
    g = check_gamma(gamma)
    if u_delta <= 0:
        raise ValueError("u(delta) must be positive; the change is undetectable in this "
                         "direction")
    if q_alpha <= 0:
        raise ValueError("q_alpha must be positive")
    return (q_alpha / u_delta) ** (1.0 / (1.0 - g))


def rejection_rate(draws: Iterable[float], critical: float) -> tuple[float, float]:
    """Fraction of draws above ``critical`` with its binomial standard error."""
    arr = np.asarray(list(draws) if not isinstance(draws, np.ndarray) else draws)
    p = float(np.mean(arr > critical))
    return p, math.sqrt(p * (1 - p) / arr.size)
