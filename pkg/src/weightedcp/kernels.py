"""Odd kernels g and the Hoeffding quantities that parameterize the limit laws.

A kernel enters the two-sample statistic as ``h(x, y) = g(y - x)``. For each
kernel and noise law this module provides the mean shift ``u(delta)``, the
first-order projections ``h1``/``h2``, the long-run scale ``sigma`` and the
contiguous-alternative drift constant ``c_g``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

DEFAULT_MC_REPS = 10**6


class KernelKind(enum.Enum):
    CUSUM = "cusum"
    WILCOXON = "wilcoxon"
    CUSTOM = "custom"


class UnsupportedCombinationError(ValueError):
    """Raised when a kernel/noise pair offers neither an analytic rule nor a sampler."""


class DegenerateNoiseError(ValueError):
    """Raised when the noise law has zero variance."""


class ExtrapolationError(RuntimeError):
    """Raised when the drift-constant extrapolation does not settle.

    The sequence of scaled values that failed to converge is kept on
    ``diagnostics`` as ``(n, value)`` pairs.
    """

    def __init__(self, message: str, diagnostics: list[tuple[int, float]]):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Estimate:
    """A scalar with its Monte Carlo standard error.

    Exact values carry ``stderr == 0`` and ``reps == 0``.
    """

    value: float
    stderr: float = 0.0
    reps: int = 0

    def __float__(self) -> float:
        return float(self.value)

    @property
    def exact(self) -> bool:
        return self.reps == 0


def _cusum(x):
    return np.asarray(x, dtype=float) * 1.0


def _wilcoxon(x):
    # 1{0 <= x} - 1/2 away from zero; g(0) = 0 keeps the kernel odd on ties
    return 0.5 * np.sign(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Kernel:
    kind: KernelKind
    g: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __call__(self, x):
        return self.g(x)

    @property
    def label(self) -> str:
        return self.name or self.kind.value


CUSUM = Kernel(KernelKind.CUSUM, _cusum, "cusum")
WILCOXON = Kernel(KernelKind.WILCOXON, _wilcoxon, "wilcoxon")


def custom_kernel(g: Callable, name: str = "custom", check_odd: bool = True) -> Kernel:
    """Wrap a user-supplied odd function as a kernel.

    The function must accept numpy arrays. With ``check_odd`` the oddness is
    probed on a fixed set of points and a ``ValueError`` is raised if
    ``g(-x) != -g(x)`` beyond 1e-12.
    """
    kernel = Kernel(KernelKind.CUSTOM, g, name)
    if check_odd:
        probe = np.concatenate([[0.0], np.linspace(-10, 10, 401), np.logspace(-6, 3, 50)])
        lhs = np.asarray(g(-probe), dtype=float)
        rhs = -np.asarray(g(probe), dtype=float)
        if not np.allclose(lhs, rhs, rtol=0, atol=1e-12):
            raise ValueError(f"kernel {name!r} is not odd")
    return kernel


def get_kernel(name: str | Kernel) -> Kernel:
    if isinstance(name, Kernel):
        return name
    key = name.lower()
    if key == "cusum":
        return CUSUM
    if key == "wilcoxon":
        return WILCOXON
    raise ValueError(f"unknown kernel {name!r}; expected 'cusum' or 'wilcoxon'")


def eval_kernel(kernel: Kernel, x):
    """Evaluate ``g(x)``; rejects non-finite input."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel argument must be finite")
    out = kernel(arr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. mean-zero noise law.

    Any of ``cdf``, ``pdf``, ``sampler`` may be missing; operations pick the
    most exact route the supplied pieces allow. ``sampler(rng, size)`` must
    return an array of the requested shape.
    """

    name: str
    cdf: Callable | None = None
    pdf: Callable | None = None
    sampler: Callable[[np.random.Generator, object], np.ndarray] | None = None
    variance: float | None = None
    continuous: bool = True
    # CDF of xi_2 - xi_1, when known in closed form
    difference_cdf: Callable | None = None
    # integral of pdf^2, when known in closed form
    density_l2: float | None = None

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.sampler is None:
            raise UnsupportedCombinationError(f"noise {self.name!r} has no sampler")
        return np.asarray(self.sampler(rng, size), dtype=float)


def standard_normal() -> NoiseModel:
    return NoiseModel(
        name="normal",
        cdf=special.ndtr,
        pdf=lambda y: np.exp(-0.5 * np.square(y)) / math.sqrt(2 * math.pi),
        sampler=lambda rng, size: rng.standard_normal(size),
        variance=1.0,
        difference_cdf=lambda z: special.ndtr(np.asarray(z) / math.sqrt(2.0)),
        density_l2=1.0 / (2.0 * math.sqrt(math.pi)),
    )


def normal(scale: float) -> NoiseModel:
    """Centered normal noise with standard deviation ``scale``."""
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if scale == 0:
        return NoiseModel("constant", sampler=lambda rng, size: np.zeros(size), variance=0.0,
                          continuous=False)
    s = float(scale)
    return NoiseModel(
        name=f"normal({s:g})",
        cdf=lambda y: special.ndtr(np.asarray(y) / s),
        pdf=lambda y: np.exp(-0.5 * np.square(np.asarray(y) / s)) / (s * math.sqrt(2 * math.pi)),
        sampler=lambda rng, size: s * rng.standard_normal(size),
        variance=s * s,
        difference_cdf=lambda z: special.ndtr(np.asarray(z) / (s * math.sqrt(2.0))),
        density_l2=1.0 / (2.0 * s * math.sqrt(math.pi)),
    )


def from_scipy(dist, name: str | None = None) -> NoiseModel:
    """Build a noise model from a frozen scipy.stats distribution (assumed centered)."""
    return NoiseModel(
        name=name or dist.dist.name,
        cdf=dist.cdf,
        pdf=getattr(dist, "pdf", None),
        sampler=lambda rng, size: dist.rvs(size=size, random_state=rng),
        variance=float(dist.var()),
    )


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _mc_mean(values: np.ndarray) -> Estimate:
    n = values.size
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)), n)


def u_of_delta(
    kernel: Kernel,
    noise: NoiseModel,
    delta: float,
    *,
    method: str = "auto",
    reps: int = DEFAULT_MC_REPS,
    rng=None,
) -> Estimate:
    """Mean shift ``u(delta) = E[g(xi - eta + delta) - g(xi - eta)]``.

    ``method`` is ``"auto"`` (closed form or quadrature when available, else
    Monte Carlo), ``"analytic"`` or ``"mc"``.
    """
    if method not in ("auto", "analytic", "mc"):
        raise ValueError(f"unknown method {method!r}")
    delta = float(delta)
    if delta == 0.0:
        return Estimate(0.0)
    if kernel.kind is KernelKind.CUSUM and method != "mc":
        return Estimate(delta)
    if kernel.kind is KernelKind.WILCOXON and method != "mc" and noise.continuous:
        if noise.difference_cdf is not None:
            return Estimate(float(noise.difference_cdf(delta)) - 0.5)
        if noise.cdf is not None and noise.pdf is not None:
            val, _ = integrate.quad(
                lambda y: (noise.cdf(y) - noise.cdf(y - delta)) * noise.pdf(y),
                -np.inf, np.inf, limit=200,
            )
            return Estimate(float(val))
    if method == "analytic":
        raise UnsupportedCombinationError(
            f"no analytic u(delta) for kernel {kernel.label!r} with noise {noise.name!r}")
    if noise.sampler is None:
        raise UnsupportedCombinationError(
            f"kernel {kernel.label!r} needs a noise sampler for u(delta)")
    gen = _rng(rng)
    d = noise.sample(gen, reps) - noise.sample(gen, reps)
    return _mc_mean(kernel(d + delta) - kernel(d))


def _density_l2(noise: NoiseModel) -> float:
    if noise.density_l2 is not None:
        return noise.density_l2
    if noise.pdf is None:
        raise UnsupportedCombinationError(f"noise {noise.name!r} has no density")
    val, _ = integrate.quad(lambda y: noise.pdf(y) ** 2, -np.inf, np.inf, limit=200)
    return float(val)


def drift_constant(
    kernel: Kernel,
    noise: NoiseModel,
    c: float,
    *,
    n_grid: tuple[int, ...] = (10**3, 10**4, 10**5, 10**6),
    rtol: float = 1e-3,
    reps: int = DEFAULT_MC_REPS,
    rng=None,
) -> float:
    """Limit of ``sqrt(n) * u(c / sqrt(n))`` for jumps ``c / sqrt(n)``.

    Closed form for CUSUM (``c``) and Wilcoxon (``c * int f^2``). Other
    kernels use Richardson extrapolation in ``1/sqrt(n)`` along ``n_grid``
    with common random numbers, and raise :class:`ExtrapolationError` when
    the last two extrapolants differ by more than ``rtol`` relative.
    """
    c = float(c)
    if c == 0.0:
        return 0.0
    if kernel.kind is KernelKind.CUSUM:
        return c
    if kernel.kind is KernelKind.WILCOXON and noise.continuous:
        return c * _density_l2(noise)
    if noise.sampler is None:
        raise UnsupportedCombinationError(
            f"kernel {kernel.label!r} needs a noise sampler for c_g")

    gen = _rng(rng)
    d = noise.sample(gen, reps) - noise.sample(gen, reps)
    base = kernel(d)
    seq = []
    for n in n_grid:
        step = c / math.sqrt(n)
        seq.append((int(n), float(math.sqrt(n) * np.mean(kernel(d + step) - base))))
    vals = np.array([v for _, v in seq])
    ratios = np.sqrt(np.array(n_grid[1:], dtype=float) / np.array(n_grid[:-1], dtype=float))
    rich = (ratios * vals[1:] - vals[:-1]) / (ratios - 1.0)
    if rich.size >= 2:
        last, prev = rich[-1], rich[-2]
    else:
        last, prev = vals[-1], vals[-2]
    scale = max(abs(last), abs(prev))
    if not np.all(np.isfinite(vals)) or scale == 0.0 or abs(last - prev) > rtol * scale:
        raise ExtrapolationError(
            f"sqrt(n) u(c/sqrt(n)) did not settle within rtol={rtol}", seq)
    return float(last)


def sigma_asymptotic(
    kernel: Kernel,
    noise: NoiseModel,
    *,
    outer: int = 2000,
    inner: int = 2000,
    rng=None,
) -> Estimate:
    """Scale ``sigma = sqrt(E g1(xi)^2)`` of the null limit ``sigma * W0``.

    CUSUM gives the noise standard deviation and Wilcoxon on continuous noise
    gives ``1/sqrt(12)``. Other kernels use a nested Monte Carlo estimate with
    ``outer`` evaluation points and ``inner`` draws per projection; the
    standard error is reported for ``sigma^2`` propagated to ``sigma``.
    """
    if noise.variance is not None and noise.variance <= 0:
        raise DegenerateNoiseError(f"noise {noise.name!r} has zero variance")
    if kernel.kind is KernelKind.WILCOXON and noise.continuous:
        return Estimate(1.0 / math.sqrt(12.0))
    if kernel.kind is KernelKind.CUSUM and noise.variance is not None:
        return Estimate(math.sqrt(noise.variance))
    if noise.sampler is None:
        raise UnsupportedCombinationError(
            f"kernel {kernel.label!r} needs a noise sampler for sigma")
    gen = _rng(rng)
    if kernel.kind is KernelKind.CUSUM:
        draws = noise.sample(gen, DEFAULT_MC_REPS)
        var = float(draws.var(ddof=1))
        if var <= 0:
            raise DegenerateNoiseError(f"noise {noise.name!r} has zero variance")
        se_var = float(np.std((draws - draws.mean()) ** 2, ddof=1) / math.sqrt(draws.size))
        return Estimate(math.sqrt(var), se_var / (2 * math.sqrt(var)), draws.size)
    x = noise.sample(gen, outer)
    xi = noise.sample(gen, inner)
    eta = noise.sample(gen, inner)
    centre = float(np.mean(kernel(xi - eta)))
    g1 = np.array([np.mean(kernel(xi - xv)) for xv in x]) - centre
    sq = g1**2
    var = float(sq.mean())
    if var <= 0:
        raise DegenerateNoiseError(f"projection of kernel {kernel.label!r} is degenerate")
    se_var = float(sq.std(ddof=1) / math.sqrt(outer))
    return Estimate(math.sqrt(var), se_var / (2 * math.sqrt(var)), outer)


def hoeffding_projections(
    kernel: Kernel,
    noise: NoiseModel,
    delta: float,
    x,
    *,
    reps: int = 20000,
    rng=None,
):
    """First-order projections ``(h1(x), h2(x))`` of ``g(y - x + delta) - g(y - x)``.

    ``h1(x) = E[g(xi - x + delta) - g(xi - x)] - u(delta)`` and
    ``h2(y) = E[g(y - xi + delta) - g(y - xi)] - u(delta)``. ``x`` may be a
    scalar or an array. Non-analytic cases reuse one set of ``reps`` noise
    draws for every point.
    """
    xs = np.asarray(x, dtype=float)
    delta = float(delta)
    if kernel.kind is KernelKind.CUSUM or delta == 0.0:
        h1 = np.zeros_like(xs)
        h2 = np.zeros_like(xs)
    elif kernel.kind is KernelKind.WILCOXON and noise.continuous and noise.cdf is not None:
        u = u_of_delta(kernel, noise, delta).value
        h1 = noise.cdf(xs) - noise.cdf(xs - delta) - u
        h2 = noise.cdf(xs + delta) - noise.cdf(xs) - u
    else:
        if noise.sampler is None:
            raise UnsupportedCombinationError(
                f"kernel {kernel.label!r} needs a noise sampler for projections")
        gen = _rng(rng)
        xi = noise.sample(gen, reps)
        u = u_of_delta(kernel, noise, delta, reps=reps, rng=gen).value
        flat = xs.reshape(-1)
        h1 = np.array([np.mean(kernel(xi - v + delta) - kernel(xi - v)) for v in flat]) - u
        h2 = np.array([np.mean(kernel(v - xi + delta) - kernel(v - xi)) for v in flat]) - u
        h1 = h1.reshape(xs.shape)
        h2 = h2.reshape(xs.shape)
    if xs.ndim == 0:
        return float(h1), float(h2)
    return np.asarray(h1, dtype=float), np.asarray(h2, dtype=float)
