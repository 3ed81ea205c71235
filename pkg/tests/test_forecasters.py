import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from demandpool.errors import DegenerateSeries, EmptySeries
from demandpool.forecasters import (
    DampedParams,
    DemandSeries,
    _to_theta,
    damped_means,
    empirical_forecast,
    fit_damped,
    forecast_damped,
    loglik_damped,
    simulate_damped,
    wss_forecast,
    wss_paths,
    zv_forecast,
    zv_paths,
)
from demandpool.pmf import TAU_GRID

from .strategies import simulate_dgp


def series(values, sid="s"):
    return DemandSeries(sid, np.asarray(values))


class TestDemandSeries:
    def test_start_index(self):
        assert series([0, 0, 3, 0, 1]).start_index == 2
        assert series([0, 0]).start_index == 2

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            series([1, -1])

    def test_segment_starts_at_first_positive(self):
        np.testing.assert_array_equal(series([0, 0, 3, 0, 1]).segment(4).values, [3, 0])


class TestDampedRecursion:
    def test_zero_dynamics_gives_constant_mean(self):
        y = np.array([0, 5, 0, 9, 1])
        np.testing.assert_allclose(damped_means(y, 2.5, 0.0, 0.0, init=y.mean()), 2.5, atol=1e-14)

    def test_matches_loop(self):
        rng = np.random.default_rng(1)
        y = rng.poisson(3.0, 50)
        mu, phi, alpha, init = 3.0, 0.4, 0.3, y.mean()
        expected = []
        m, prev = init, init
        for t in range(51):
            m = (1 - phi - alpha) * mu + phi * m + alpha * prev
            expected.append(m)
            prev = y[t] if t < 50 else None
        np.testing.assert_allclose(damped_means(y, mu, phi, alpha, init), expected, rtol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(1e-4, 50),
        st.floats(1e-6, 0.98),
        st.floats(0.0, 1.0),
        st.lists(st.integers(0, 100), min_size=1, max_size=60),
    )
    def test_mean_stays_positive(self, mu, phi, frac, ys):
        alpha = max((1 - phi) * frac * 0.999, 1e-9)
        y = np.asarray(ys)
        assert np.all(damped_means(y, mu, phi, alpha, init=y.mean()) > 0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            DampedParams(2.0, 0.6, 0.4)
        with pytest.raises(ValueError):
            DampedParams(2.0, 0.3, 0.2, b=0.0)
        assert DampedParams(2.0, 0.3, 0.2, b=1.0).family == "negbin"


class TestFitDamped:
    def test_all_zero_is_degenerate(self):
        with pytest.raises(DegenerateSeries):
            fit_damped(series(np.zeros(100, dtype=int)), "poisson")

    def test_too_short_is_degenerate(self):
        with pytest.raises(DegenerateSeries):
            fit_damped(series([1, 2, 0, 3]), "poisson")

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            fit_damped(series(np.ones(30, dtype=int)), "gamma")

    @pytest.mark.parametrize("family", ["poisson", "negbin"])
    def test_loglik_not_below_starts(self, family):
        y = simulate_dgp(300, 3.0, 0.3, 0.2, None if family == "poisson" else 1.5, seed=4)
        p = fit_damped(series(y), family)
        assert p.loglik == pytest.approx(loglik_damped(y, family, p.mu, p.phi, p.alpha, p.b), rel=1e-9)
        b0 = 1.0 if family == "negbin" else None
        for phi0, alpha0 in [(0.3, 0.2), (0.1, 0.1), (0.6, 0.2), (0.2, 0.6), (0.05, 0.05)]:
            start = loglik_damped(y, family, y.mean(), phi0, alpha0, b0)
            assert p.loglik >= start - 1e-9

    def test_poisson_recovery(self):
        y = simulate_dgp(2000, 2.0, 0.3, 0.2, seed=0)
        p = fit_damped(series(y), "poisson")
        assert abs(p.mu - 2.0) < 0.15
        assert abs(p.phi - 0.3) < 0.15
        assert abs(p.alpha - 0.2) < 0.15

    def test_level_stays_bounded_on_flat_ridge(self):
        # long stretches of zeros pull phi towards one; mu must not run away
        rng = np.random.default_rng(125)
        y = np.where(rng.random(150) < 0.3, 1 + rng.negative_binomial(0.5, 0.5 / 5.5, 150), 0)
        p = fit_damped(series(y), "negbin")
        assert p.mu <= 10 * y.max()

    def test_reparameterisation_round_trip(self):
        from demandpool.forecasters import _to_params

        theta = _to_theta(2.0, 0.3, 0.2, 1.5, "negbin")
        np.testing.assert_allclose(_to_params(theta, "negbin"), (2.0, 0.3, 0.2, 1.5), rtol=1e-12)


class TestForecastDamped:
    def test_near_static_poisson(self):
        p = DampedParams(2.0, 0.005, 0.005)
        qs = forecast_damped(p, series(np.full(60, 2)), "poisson", h=5, n_sims=4000, seed=3)
        mask = np.isin(np.round(TAU_GRID * 100), np.arange(10, 100, 10))
        oracle = stats.poisson(2.0).ppf(TAU_GRID[mask])
        for q in qs:
            assert np.all(np.abs(q.values[mask] - oracle) <= 1)

    def test_tiny_mean_gives_zero(self):
        p = DampedParams(1e-4, 0.3, 0.2)
        qs = forecast_damped(p, series(np.zeros(40, dtype=int)), h=28, n_sims=1000, seed=0)
        assert all(np.all(q.values == 0) for q in qs)

    def test_deterministic(self):
        p = DampedParams(2.0, 0.3, 0.2, b=1.0)
        s = series(simulate_dgp(80, 2.0, 0.3, 0.2, 1.0, seed=2))
        a = forecast_damped(p, s, h=28, n_sims=500, seed=11)
        b = forecast_damped(p, s, h=28, n_sims=500, seed=11)
        assert a == b

    def test_family_mismatch(self):
        with pytest.raises(ValueError):
            forecast_damped(DampedParams(2.0, 0.3, 0.2), series(np.ones(30, dtype=int)), "negbin")

    @pytest.mark.parametrize("b", [0.5, 2.0, 9.0])
    def test_negbin_overdispersed(self, b):
        p = DampedParams(3.0, 0.3, 0.2, b=b)
        draws = simulate_damped(p, series(np.full(50, 3)), 1, 20_000, seed=5)[:, 0]
        # one step ahead the mean is exactly 3, so the variance is 3 * (1 + 1/b)
        assert draws.var() > draws.mean()
        assert draws.var() == pytest.approx(3.0 * (1 + 1 / b), rel=0.1)


class TestWSS:
    def test_all_positive_chain(self):
        n = 50
        s = series(np.full(n, 2))
        occ = wss_paths(s, 28, 20_000, seed=1) > 0
        p11 = n / (n + 1)
        p01 = 0.5
        # exact expected zero fraction from the smoothed chain, started in state 1
        state = np.array([0.0, 1.0])
        P = np.array([[1 - p01, p01], [1 - p11, p11]])
        zero_mass = []
        for _ in range(28):
            state = state @ P
            zero_mass.append(state[0])
        assert abs((~occ).mean() - np.mean(zero_mass)) < 0.02

    def test_nonnegative_integers(self):
        s = series([0, 3, 0, 0, 1, 7, 0, 2] * 5)
        paths = wss_paths(s, 28, 500, seed=0)
        assert paths.dtype.kind == "i" and paths.min() >= 0

    def test_deterministic(self):
        s = series([0, 3, 0, 0, 1, 7, 0, 2] * 5)
        assert wss_forecast(s, 28, 300, seed=9) == wss_forecast(s, 28, 300, seed=9)

    def test_no_positive_demand(self):
        with pytest.raises(DegenerateSeries):
            wss_forecast(series(np.zeros(30, dtype=int)), 28, 200, seed=0)


class TestZV:
    def test_periodic_pattern(self):
        s = series([3, 0] * 30)
        paths = zv_paths(s, 28, 400, seed=2)
        assert set(np.unique(paths)) == {0, 3}
        for row in paths:
            idx = np.flatnonzero(row)
            assert np.all(np.diff(idx) == 2)
            assert idx[0] in (0, 1)

    def test_single_positive(self):
        with pytest.raises(DegenerateSeries):
            zv_forecast(series([0, 0, 4, 0, 0]), 28, 200, seed=0)

    def test_deterministic(self):
        s = series([0, 3, 0, 0, 1, 7, 0, 2] * 5)
        assert zv_forecast(s, 28, 300, seed=4) == zv_forecast(s, 28, 300, seed=4)


class TestEmpirical:
    def test_zeros(self):
        qs = empirical_forecast(series(np.zeros(30, dtype=int)), h=28)
        assert len(qs) == 28 and all(np.all(q.values == 0) for q in qs)

    def test_nearest_rank(self):
        q = empirical_forecast(series([0] * 9 + [10]), h=3)[0].values
        # rank ceil(tau * 10): 0.90 -> 9th order statistic (0), 0.91 -> 10th (10)
        assert q[88] == 0
        assert q[89] == 0
        assert q[90] == 10

    def test_same_for_every_horizon(self):
        qs = empirical_forecast(series([1, 0, 2, 5, 0, 0, 3]), h=4)
        assert all(q == qs[0] for q in qs)

    def test_empty(self):
        with pytest.raises(EmptySeries):
            empirical_forecast(series(np.array([], dtype=int)), h=2)
