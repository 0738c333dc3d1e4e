"""Weighted two-sample U-statistic profiles and the change-point test.

For a series ``x_1..x_n`` and split ``k`` the profile value is

    G(k) = sum_{i<=k} sum_{j>k} g(x_j - x_i) / (n^{3/2} (k/n (1 - k/n))^gamma)

The double sums are computed in O(n) for CUSUM (prefix sums) and in
O(n log n) for Wilcoxon (midranks). A literal O(n^3) evaluation is kept as an
oracle. All batch helpers operate along the last axis so that a whole block
of Monte Carlo replications is handled in one call.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .kernels import CUSUM, WILCOXON, Kernel, KernelKind, NoiseModel, get_kernel, sigma_asymptotic


class Sided(enum.Enum):
    ONE_SIDED = "max"
    TWO_SIDED = "maxabs"

    @classmethod
    def parse(cls, value: "str | Sided") -> "Sided":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        if key in ("max", "one", "onesided", "onesidedmax"):
            return cls.ONE_SIDED
        if key in ("maxabs", "two", "twosided", "twosidedmaxabs"):
            return cls.TWO_SIDED
        raise ValueError(f"unknown sidedness {value!r}")


class TableMissError(KeyError):
    """No critical value stored for the requested (gamma, alpha)."""


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 <= gamma < 0.5):
        raise ValueError(f"gamma must lie in [0, 0.5), got {gamma}")
    return gamma


def as_series(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if arr.size < 2:
        raise ValueError("series needs at least two observations")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def weights(n: int, gamma: float) -> np.ndarray:
    """Scale factors ``1 / (n^{3/2} (k/n (1-k/n))^gamma)`` for ``k = 1..n-1``."""
    lam = np.arange(1, n) / n
    return (lam * (1.0 - lam)) ** (-check_gamma(gamma)) / n**1.5


def cusum_sums(x: np.ndarray) -> np.ndarray:
    """``k S_n - n S_k`` for ``k = 1..n-1`` along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    s = np.cumsum(x, axis=-1)
    k = np.arange(1, n)
    return k * s[..., -1:] - n * s[..., :-1]


def wilcoxon_sums(x: np.ndarray) -> np.ndarray:
    """Double sums of ``sign(x_j - x_i) / 2`` via midranks.

    With midranks ``R`` the sum over ``i <= k < j`` equals
    ``k (n+1) / 2 - sum_{i<=k} R_i``; pairs inside the first block cancel by
    antisymmetry.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r = rankdata(x, method="average", axis=-1)
    k = np.arange(1, n)
    return k * (n + 1) / 2.0 - np.cumsum(r, axis=-1)[..., :-1]


def bruteforce_sums(x: np.ndarray, kernel: Kernel) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty(n - 1)
    for k in range(1, n):
        # every pair (i <= k, j > k), evaluated afresh for each split
        out[k - 1] = np.sum(kernel(x[None, k:] - x[:k, None]))
    return out


def kernel_sums(x: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Fast double sums for the built-in kernels, batched over leading axes."""
    if kernel.kind is KernelKind.CUSUM:
        return cusum_sums(x)
    if kernel.kind is KernelKind.WILCOXON:
        return wilcoxon_sums(x)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return bruteforce_sums(x, kernel)
    return np.stack([kernel_sums(row, kernel) for row in x.reshape(-1, x.shape[-1])]).reshape(
        x.shape[:-1] + (x.shape[-1] - 1,))


@dataclass(frozen=True)
class StatisticProfile:
    """``G(k)`` for ``k = 1..n-1`` (``values[k-1]``)."""

    gamma: float
    values: np.ndarray
    kernel: str = "cusum"
    sided: Sided = Sided.TWO_SIDED

    @property
    def n(self) -> int:
        return self.values.size + 1

    @property
    def max_abs(self) -> float:
        return max_statistic(self, Sided.TWO_SIDED)[0]

    @property
    def argmax_k(self) -> int:
        return max_statistic(self, self.sided)[1]


def _profile(x, kernel: Kernel, gamma: float, sums) -> StatisticProfile:
    arr = as_series(x)
    g = check_gamma(gamma)
    return StatisticProfile(g, sums * weights(arr.size, g), kernel.label)


def profile_bruteforce(x, kernel: Kernel, gamma: float) -> StatisticProfile:
    """Literal double-sum evaluation, O(n^3); the reference for the fast paths."""
    arr = as_series(x)
    return _profile(arr, kernel, gamma, bruteforce_sums(arr, kernel))


def profile_cusum(x, gamma: float) -> StatisticProfile:
    arr = as_series(x)
    return _profile(arr, CUSUM, gamma, cusum_sums(arr))


def profile_wilcoxon(x, gamma: float) -> StatisticProfile:
    arr = as_series(x)
    return _profile(arr, WILCOXON, gamma, wilcoxon_sums(arr))


def profile(x, kernel: Kernel | str, gamma: float) -> StatisticProfile:
    kernel = get_kernel(kernel)
    arr = as_series(x)
    return _profile(arr, kernel, gamma, kernel_sums(arr, kernel))


def max_statistic(p: StatisticProfile, sided: Sided | str = Sided.TWO_SIDED) -> tuple[float, int]:
    """Maximum of the profile and the smallest ``k`` attaining it."""
    sided = Sided.parse(sided)
    vals = p.values if sided is Sided.ONE_SIDED else np.abs(p.values)
    if vals.size == 0:
        raise ValueError("empty profile")
    idx = int(np.argmax(vals))
    return float(vals[idx]), idx + 1


def max_statistics(
    x: np.ndarray,
    kernel: Kernel | str,
    gammas: Sequence[float],
    sided: Sided | str = Sided.TWO_SIDED,
) -> np.ndarray:
    """Max statistics for a batch of series, shape ``x.shape[:-1] + (len(gammas),)``.

    The kernel double sums are computed once and reweighted per gamma.
    """
    kernel = get_kernel(kernel)
    sided = Sided.parse(sided)
    x = np.asarray(x, dtype=float)
    sums = kernel_sums(x, kernel)
    if sided is Sided.TWO_SIDED:
        sums = np.abs(sums)
    n = x.shape[-1]
    out = np.empty(x.shape[:-1] + (len(gammas),))
    for col, g in enumerate(gammas):
        out[..., col] = np.max(sums * weights(n, g), axis=-1)
    return out


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    statistic: float
    critical_value: float
    reject: bool
    estimated_changepoint: int
    alpha: float
    gamma: float
    kernel: str
    sided: Sided
    scale: float = 1.0
    profile: StatisticProfile | None = field(default=None, repr=False, compare=False)


def studentizing_scale(
    x: np.ndarray, kernel: Kernel, noise: NoiseModel | None = None, sigma: float | None = None
) -> float:
    """Scale ``sigma`` dividing the statistic before an asymptotic table lookup.

    Wilcoxon is distribution free (``1/sqrt(12)``). CUSUM uses the noise
    standard deviation when known, otherwise the sample standard deviation,
    which is inflated by a mean shift.
    """
    if sigma is not None:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return float(sigma)
    if kernel.kind is KernelKind.WILCOXON:
        return 1.0 / math.sqrt(12.0)
    if kernel.kind is KernelKind.CUSUM:
        if noise is not None and noise.variance:
            return math.sqrt(noise.variance)
        sd = float(np.std(x, ddof=1))
        return sd if sd > 0 else 1.0
    if noise is not None:
        return sigma_asymptotic(kernel, noise).value
    raise ValueError("custom kernels need an explicit sigma or noise model")


def run_test(
    x,
    kernel: Kernel | str,
    gamma: float,
    alpha: float,
    table,
    *,
    noise: NoiseModel | None = None,
    sigma: float | None = None,
    sided: Sided | str | None = None,
) -> TestOutcome:
    """Test for a single change in location.

    ``table`` is a :class:`weightedcp.limits.QuantileTable`. Tables with
    ``source == "asymptotic"`` hold quantiles of the standardized limit, so the
    statistic is divided by the studentizing scale first; ``"empirical"``
    tables were simulated for the raw statistic and are used as-is. The
    sidedness defaults to the table's.
    """
    kernel = get_kernel(kernel)
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    arr = as_series(x)
    p = profile(arr, kernel, gamma)
    side = Sided.parse(sided) if sided is not None else table.sided
    crit = table.lookup(p.gamma, alpha)
    scale = 1.0
    if table.source == "asymptotic":
        scale = studentizing_scale(arr, kernel, noise, sigma)
    value, k_hat = max_statistic(p, side)
    stat = value / scale
    return TestOutcome(
        statistic=stat,
        critical_value=crit,
        reject=bool(stat > crit),
        estimated_changepoint=k_hat,
        alpha=float(alpha),
        gamma=p.gamma,
        kernel=kernel.label,
        sided=side,
        scale=scale,
        profile=p,
    )
