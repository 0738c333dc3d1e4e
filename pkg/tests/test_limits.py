import math
import warnings

import numpy as np
import pytest

from weightedcp.limits import (
    A1LimitSpec,
    A2LimitSpec,
    BridgeGrid,
    QuantileTable,
    bridge_sup_tail,
    build_quantile_table,
    consistency_threshold,
    kappa,
    phi_tau,
    published_quantiles,
    rejection_rate,
    sample_bridge_sup_continuous,
    sample_bridges,
    sample_limit_a1,
    sample_limit_a2_unweighted,
    sample_limit_a2_weighted,
    sample_weighted_bridge_sup,
    simulate_bridge_sups,
)
from weightedcp.statistic import Sided, TableMissError

GAMMAS = [0.0, 0.1, 0.2, 0.3, 0.4]


def rng(seed):
    return np.random.default_rng(seed)


class TestGrid:
    def test_lambdas_exclude_endpoints(self):
        lam = BridgeGrid(100).lambdas
        assert lam[0] == 0.01 and lam[-1] == 0.99 and lam.size == 99

    @pytest.mark.parametrize("m", [10, 99, 150.5])
    def test_invalid(self, m):
        with pytest.raises(ValueError):
            BridgeGrid(m)


class TestBridges:
    def test_endpoints_vanish(self):
        # recompute the construction with endpoints and check them exactly
        m = 500
        steps = rng(1).standard_normal((50, m)) / math.sqrt(m)
        walk = np.concatenate([np.zeros((50, 1)), np.cumsum(steps, axis=1)], axis=1)
        lam = np.arange(m + 1) / m
        bridge = walk - lam * walk[:, -1:]
        assert np.all(bridge[:, 0] == 0) and np.all(bridge[:, -1] == 0)

    def test_moments(self):
        grid = BridgeGrid(1000)
        paths = sample_bridges(grid, 20_000, rng(2))
        for lam in (0.1, 0.5, 0.9):
            col = paths[:, round(lam * grid.m) - 1]
            var = lam * (1 - lam)
            assert abs(col.mean()) < 3 * math.sqrt(var / col.size)
            assert abs(col.var() - var) < 3 * var * math.sqrt(2 / col.size)

    def test_continuous_sup_matches_tail_law(self):
        sups = sample_bridge_sup_continuous(BridgeGrid(1000), 100_000, rng(3))
        for x in (0.5, 1.0, 1.5):
            p = bridge_sup_tail(x)
            se = math.sqrt(p * (1 - p) / sups.size)
            assert abs(np.mean(sups > x) - p) < 3 * se

    def test_grid_sup_is_biased_down(self):
        grid = BridgeGrid(1000)
        g1, g2 = rng(4), rng(4)
        assert np.all(sample_weighted_bridge_sup(0.0, grid, g1, size=200)
                      <= sample_bridge_sup_continuous(grid, 200, g2) + 1e-15)

    def test_lower_bound_at_midpoint(self):
        grid = BridgeGrid(1000)
        for gamma in GAMMAS:
            paths = sample_bridges(grid, 100, rng(5))
            sups = sample_weighted_bridge_sup(gamma, grid, rng(5), size=100)
            mid = paths[:, grid.m // 2 - 1] * 4**gamma
            assert np.all(sups >= mid - 1e-12)
            assert np.all(sups >= 0)

    def test_single_draw_is_float(self):
        assert isinstance(sample_weighted_bridge_sup(0.2, BridgeGrid(200), rng(6)), float)

    @pytest.mark.parametrize("gamma", [
        0.0, 0.1, 0.2, 0.3,
        pytest.param(0.4, marks=pytest.mark.xfail(
            reason="coupled m=2000 vs m=10^4 gap measured at 0.018-0.022, straddling 0.02",
            strict=False)),
    ])
    def test_grid_convergence_coupled(self, gamma, coupled_sups):
        fine_sups, coarse_sups = coupled_sups
        col = GAMMAS.index(gamma)
        assert np.all(coarse_sups[:, col] <= fine_sups[:, col])
        qf = np.quantile(fine_sups[:, col], [0.9, 0.95, 0.99])
        qc = np.quantile(coarse_sups[:, col], [0.9, 0.95, 0.99])
        assert np.all(qf >= qc)
        assert np.all(qf - qc < 0.02)


@pytest.fixture(scope="module")
def coupled_sups():
    # the m = 2000 grid is every fifth point of the m = 10^4 grid
    fine = BridgeGrid(10_000)
    lam = fine.lambdas
    coarse_idx = np.arange(4, fine.m - 1, 5)
    w = np.stack([(lam * (1 - lam)) ** -g for g in GAMMAS])
    fine_sups, coarse_sups = [], []
    for b in range(40):
        paths = sample_bridges(fine, 500, rng(100 + b))
        fine_sups.append(np.stack([(paths * wi).max(axis=1) for wi in w], axis=1))
        coarse_sups.append(np.stack(
            [(paths[:, coarse_idx] * wi[coarse_idx]).max(axis=1) for wi in w], axis=1))
    return np.concatenate(fine_sups), np.concatenate(coarse_sups)


@pytest.fixture(scope="module")
def table():
    return build_quantile_table(GAMMAS, [0.1, 0.05, 0.01], 20_000, BridgeGrid(1000), seed=7,
                                n_boot=50)


class TestQuantileTable:
    def test_monotone(self, table):
        for a in (0.1, 0.05, 0.01):
            qs = [table.lookup(g, a) for g in GAMMAS]
            assert all(x < y for x, y in zip(qs, qs[1:]))
        for g in GAMMAS:
            qs = [table.lookup(g, a) for a in (0.1, 0.05, 0.01)]
            assert all(x < y for x, y in zip(qs, qs[1:]))

    def test_stderr_reported(self, table):
        e = table.entry(0.3, 0.05)
        assert 0 < e.stderr < 0.05 and e.reps == 20_000 and e.grid_m == 1000

    def test_csv_roundtrip(self, table, tmp_path):
        path = tmp_path / "q.csv"
        text = table.to_csv(path)
        assert text.splitlines()[0].startswith("# ")
        assert "gamma,alpha,quantile,stderr,reps,grid_m" in text
        back = QuantileTable.from_csv(path)
        assert back.sided is Sided.ONE_SIDED and back.source == "asymptotic"
        for g in GAMMAS:
            assert back.lookup(g, 0.05) == pytest.approx(table.lookup(g, 0.05), abs=1e-6)

    def test_miss(self, table):
        with pytest.raises(TableMissError):
            table.lookup(0.15, 0.05)

    def test_thread_count_irrelevant(self):
        kwargs = dict(gammas=[0.0, 0.3], alphas=[0.05], reps=1200, grid=BridgeGrid(300), seed=9,
                      n_boot=20)
        one = build_quantile_table(**kwargs, threads=1).to_csv()
        three = build_quantile_table(**kwargs, threads=3).to_csv()
        assert one == three

    def test_small_reps_flagged(self):
        with pytest.warns(UserWarning, match="replications"):
            t = build_quantile_table([0.0], [0.05], 10, BridgeGrid(100), n_boot=10)
        assert t.metadata["high_stderr"] == "true"

    def test_two_sided_exceeds_one_sided(self):
        one = simulate_bridge_sups([0.2], 500, BridgeGrid(500), seed=3)
        two = simulate_bridge_sups([0.2], 500, BridgeGrid(500), seed=3, sided="maxabs")
        assert np.all(two >= one)

    def test_published_values(self):
        t = published_quantiles()
        assert t.lookup(0.0, 0.05) == 1.20
        assert t.lookup(0.3, 0.05) == 1.96
        assert t.lookup(0.4, 0.01) == 2.83
        assert len(t.entries) == 15


class TestA1Limit:
    def test_deterministic_drift(self):
        spec = A1LimitSpec(gamma=0.0, tau_star=0.5, c_g=2.0, sigma=0.0)
        assert sample_limit_a1(spec, BridgeGrid(1000), rng(0)) == pytest.approx(0.5)

    def test_zero_drift_is_scaled_null(self):
        grid = BridgeGrid(400)
        spec = A1LimitSpec(gamma=0.2, tau_star=0.3, c_g=0.0, sigma=2.0)
        a = sample_limit_a1(spec, grid, rng(8), size=50)
        b = 2.0 * sample_weighted_bridge_sup(0.2, grid, rng(8), size=50)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_phi_tau(self):
        assert phi_tau(0.2, 0.5) == pytest.approx(0.1)
        assert phi_tau(0.5, 0.5) == pytest.approx(0.25)
        assert phi_tau(0.75, 0.5) == pytest.approx(0.125)

    def test_tau_interior(self):
        with pytest.raises(ValueError):
            A1LimitSpec(0.0, 1.0, 1.0)


class TestA2Limits:
    def test_kappa(self):
        assert kappa(0.0) == 0.5
        assert kappa(0.3) == pytest.approx(2 / 7)
        assert 0 < kappa(0.49) <= 0.5

    def test_unweighted_null(self):
        grid = BridgeGrid(300)
        spec = A2LimitSpec(gamma=0.0, c=0.0, u_delta=1.0, sigma=1.5)
        a = sample_limit_a2_unweighted(spec, grid, rng(1), size=40)
        b = 1.5 * sample_weighted_bridge_sup(0.0, grid, rng(1), size=40, sided="maxabs")
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_unweighted_no_noise(self):
        spec = A2LimitSpec(gamma=0.0, c=2.0, u_delta=0.3, sigma=0.0)
        assert sample_limit_a2_unweighted(spec, BridgeGrid(100), rng(0)) == pytest.approx(0.6)

    def test_unweighted_power_increases_in_c(self):
        grid = BridgeGrid(500)
        null = sample_limit_a2_unweighted(A2LimitSpec(0.0, 0.0, 1.0), grid, rng(2), size=20_000)
        q = float(np.quantile(null, 0.95))
        powers = []
        for c in (0.0, 0.5, 1.0, 1.5, 2.0, 4.0):
            draws = sample_limit_a2_unweighted(A2LimitSpec(0.0, c, 1.0), grid, rng(3), size=20_000)
            powers.append(rejection_rate(draws, q)[0])
        assert abs(powers[0] - 0.05) < 0.01
        assert all(x < y for x, y in zip(powers[:-1], powers[1:])) or powers[-1] == 1.0
        assert all(x <= y for x, y in zip(powers, powers[1:]))
        assert 0.05 < powers[2] < 0.99 and powers[-1] > 0.99

    def test_wrong_regime(self):
        with pytest.raises(ValueError):
            sample_limit_a2_unweighted(A2LimitSpec(0.3, 1.0, 1.0), BridgeGrid(100), rng(0))
        with pytest.raises(ValueError):
            sample_limit_a2_weighted(A2LimitSpec(0.0, 1.0, 1.0), BridgeGrid(100), rng(0))

    def test_weighted_null(self):
        grid = BridgeGrid(300)
        a = sample_limit_a2_weighted(A2LimitSpec(0.3, 0.0, 1.0), grid, rng(4), size=40)
        b = sample_weighted_bridge_sup(0.3, grid, rng(4), size=40, sided="maxabs")
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_dichotomy(self):
        # gamma = 0.3, CUSUM with delta = 1 so u(delta) = 1
        grid = BridgeGrid(1000)
        null = sample_limit_a2_weighted(A2LimitSpec(0.3, 0.0, 1.0), grid, rng(5), size=20_000)
        q = float(np.quantile(null, 0.95))
        c_star = consistency_threshold(0.3, q, 1.0)
        low = sample_limit_a2_weighted(A2LimitSpec(0.3, 0.8 * c_star, 1.0), grid, rng(6),
                                       size=20_000)
        high = sample_limit_a2_weighted(A2LimitSpec(0.3, 1.2 * c_star, 1.0), grid, rng(7),
                                        size=20_000)
        p_low, se = rejection_rate(low, q)
        assert abs(p_low - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 20_000)
        assert rejection_rate(high, q)[0] == 1.0


class TestConsistencyThreshold:
    def test_example(self):
        assert consistency_threshold(0.3, 1.96, 1.0) == pytest.approx(1.96 ** (1 / 0.7))
        assert consistency_threshold(0.3, 1.96, 1.0) == pytest.approx(2.61522, abs=1e-5)

    def test_unit_ratio(self):
        for g in (0.05, 0.2, 0.45):
            assert consistency_threshold(g, 0.7, 0.7) == pytest.approx(1.0)

    def test_small_gamma_limit(self):
        assert consistency_threshold(1e-9, 2.0, 0.5) == pytest.approx(4.0, rel=1e-7)

    @pytest.mark.parametrize("u", [0.0, -1.0])
    def test_undetectable(self, u):
        with pytest.raises(ValueError):
            consistency_threshold(0.3, 1.96, u)


def test_rejection_rate_se():
    p, se = rejection_rate(np.array([0.0, 1.0, 2.0, 3.0]), 1.5)
    assert p == 0.5 and se == pytest.approx(0.25)


def test_no_warnings_on_default_build():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_quantile_table([0.0], [0.05], 1000, BridgeGrid(100), n_boot=10)
