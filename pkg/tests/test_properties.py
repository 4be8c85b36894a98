"""Randomised checks of the scheme guarantees: stability, comparison and Picard monotonicity."""
import numpy as np
import pytest

from grid import build_grid, check_explicit_mesh
from model import EffectiveBand, MarketParams, PayoffSpec, sigma_star
from schemes import Enforcement, Method, SchemeConfig, implicit_step_x, solve
from tests.conftest import LOG_SPOT

SEED = 20240611


def admissible_case(rng):
    """Random market and log grid on ln 100 +- 2 satisfying the spatial bound."""
    while True:
        low = rng.uniform(0.1, 0.3)
        params = MarketParams(
            r=rng.uniform(0.0, 0.15),
            sigma=1.0,
            sigma_band=(low, low + rng.uniform(0.0, 0.2)),
            T=rng.uniform(0.1, 1.0),
        )
        M = int(rng.integers(40, 81))
        coarse = build_grid(LOG_SPOT - 2.0, LOG_SPOT + 2.0, M, 1, params.T)
        report = check_explicit_mesh(coarse, params)
        if report.upper_ok:
            return params, M, report.min_timesteps


def stability_bound(solution):
    """Largest of the initial sup-norm and every Dirichlet value on the right edge."""
    return max(solution.sup_norms[0], float(np.max(np.abs(solution.boundary_values))))


@pytest.mark.parametrize('method, samples, tolerance', [
    (Method.EXPLICIT_X, 50, 1e-12),
    (Method.IMPLICIT_X, 30, 1e-10),
])
def test_scheme_is_max_norm_stable(method, samples, tolerance):
    rng = np.random.default_rng(SEED)
    cfg = SchemeConfig(method=method, picard_tol=1e-12, enforce_mesh_conditions=Enforcement.ERROR)
    for _ in range(samples):
        params, M, N = admissible_case(rng)
        if method is Method.IMPLICIT_X:
            N = int(rng.integers(4, 33))
        grid = build_grid(LOG_SPOT - 2.0, LOG_SPOT + 2.0, M, N, params.T)
        payoff = PayoffSpec.tabulated(rng.uniform(-1.0, 1.0, M + 1), right_value=rng.uniform(-1.5, 1.5))
        solution = solve(payoff, params, grid, cfg)
        assert np.all(solution.sup_norms <= stability_bound(solution) + tolerance)


@pytest.mark.parametrize('method, samples', [(Method.IMPLICIT_X, 50), (Method.EXPLICIT_X, 10)])
def test_ordered_payoffs_give_ordered_prices(method, samples):
    rng = np.random.default_rng(SEED + 1)
    for _ in range(samples):
        params, M, N = admissible_case(rng)
        if method is Method.IMPLICIT_X:
            N = int(rng.integers(4, 17))
        grid = build_grid(LOG_SPOT - 2.0, LOG_SPOT + 2.0, M, N, params.T)
        lower = rng.uniform(0.0, 1.0, M + 1)
        upper = lower + rng.uniform(0.0, 0.5, M + 1)
        cfg = SchemeConfig(method=method, picard_tol=1e-12, enforce_mesh_conditions=Enforcement.ERROR)
        below = solve(PayoffSpec.tabulated(lower), params, grid, cfg, keep_levels=False)
        above = solve(PayoffSpec.tabulated(upper), params, grid, cfg, keep_levels=False)
        assert np.all(below.final <= above.final + 1e-9)


def test_picard_iterates_are_nondecreasing():
    rng = np.random.default_rng(SEED + 2)
    for _ in range(20):
        params, M, _ = admissible_case(rng)
        grid = build_grid(LOG_SPOT - 2.0, LOG_SPOT + 2.0, M, int(rng.integers(2, 9)), params.T)
        payoff = PayoffSpec.tabulated(rng.uniform(0.0, 1.0, M + 1))
        Vn = np.asarray(payoff.values, dtype=float)
        trace = []
        V, sweeps = implicit_step_x(Vn, 0, grid, params, payoff, SchemeConfig(picard_tol=1e-12), trace=trace)
        assert len(trace) == sweeps
        np.testing.assert_array_equal(trace[-1], V)
        for previous, current in zip(trace, trace[1:]):
            assert np.all(current - previous >= -1e-12)


def test_constant_payoff_is_discounted_geometrically():
    rng = np.random.default_rng(SEED + 3)
    for _ in range(10):
        params, M, N = admissible_case(rng)
        grid = build_grid(LOG_SPOT - 2.0, LOG_SPOT + 2.0, M, N, params.T)
        c = rng.uniform(-5.0, 5.0)
        growth = 1.0 + params.r * grid.dt
        payoff = PayoffSpec.tabulated(np.full(M + 1, c), rule=lambda t: c * growth ** -round(t / grid.dt))
        solution = solve(payoff, params, grid, SchemeConfig(method=Method.EXPLICIT_X))
        expected = c * growth ** -np.arange(N + 1)
        np.testing.assert_allclose(solution.levels, np.repeat(expected[:, None], M + 1, axis=1),
                                   rtol=1e-12, atol=1e-12)


def test_volatility_selector_follows_sign_of_curvature():
    rng = np.random.default_rng(SEED + 4)
    for _ in range(100):
        low = rng.uniform(0.01, 1.0)
        band = EffectiveBand(low, low + rng.uniform(0.0, 1.0))
        w = rng.normal(scale=rng.uniform(1e-6, 1e3))
        expected = band.high if w >= 0 else band.low
        assert sigma_star(w, band) == expected
