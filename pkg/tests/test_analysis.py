import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from degma.analysis import (SLOPE_CAP, beta_from_gamma, convergence_order, d_alpha,
                            fit_boundary_expansion, fit_normal_exponent, gamma_from_beta,
                            holder_seminorm, holder_seminorm_points, local_slopes,
                            metric_bounds, metric_equivalence_scan, normal_profile,
                            quasi_triangle_constant, rho_alpha, stratified_pairs)
from degma.errors import DomainMembershipError, FitError, ParameterError, SamplingError
from degma.fields import Grid, sample
from degma.geometry import BallDomain

ALPHAS = [0.0, 0.5, 1.0, 2.0]


class TestDistance:
    def test_values(self):
        assert d_alpha([0.0, 0.0], [1.0, 0.0], 1.0) == 1.0
        assert d_alpha([0.0, 1.0], [0.0, 0.0], 2.0) == 1.0
        assert d_alpha([0.0, 0.25], [0.0, 0.0], 2.0) == pytest.approx(0.25**2)
        assert rho_alpha([3.0, 0.0], 1.0) == 3.0
        assert rho_alpha([0.0, 4.0], 0.0) == 4.0

    def test_errors(self):
        with pytest.raises(DomainMembershipError):
            d_alpha([0.0, -0.1], [0.0, 0.0], 1.0)
        with pytest.raises(ParameterError):
            d_alpha([0.0, 0.1], [0.0, 0.0], -1.0)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_scan_within_analytic_bounds(self, alpha):
        scan = metric_equivalence_scan(alpha, samples=10_000, seed=1)
        c, C = metric_bounds(alpha)
        assert scan.c_low >= c * (1 - 1e-12)
        assert scan.C_high <= C * (1 + 1e-12)
        assert scan.c_low <= scan.C_high

    def test_alpha_zero_is_l1(self):
        # d_0 is the l1 distance: between |.| and sqrt(2) |.|
        scan = metric_equivalence_scan(0.0, samples=10_000, seed=2)
        assert scan.c_low >= 1.0 - 1e-12
        assert scan.C_high <= np.sqrt(2.0) + 1e-12

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_equal_heights_lipschitz(self, alpha):
        # away from the floor, at equal heights, d_alpha is the tangential distance
        scan = metric_equivalence_scan(alpha, region=([-1.0, 0.25], [1.0, 1.0]), samples=4000)
        rng = np.random.default_rng(0)
        t = rng.uniform(0.25, 1, 500)
        y = np.column_stack([rng.uniform(-1, 1, 500), t])
        z = np.column_stack([rng.uniform(-1, 1, 500), t])
        r = d_alpha(y, z, alpha) / np.linalg.norm(y - z, axis=1)
        assert np.allclose(r, 1.0) and scan.C_high >= 1.0 - 1e-12

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_single_axis_limit(self, alpha):
        for t in (1e-1, 1e-3, 1e-6):
            assert d_alpha([0.0, t], [0.0, 0.0], alpha) / t ** ((2 + alpha) / 2) == pytest.approx(1.0)

    def test_scan_deterministic(self):
        assert metric_equivalence_scan(1.0, seed=5) == metric_equivalence_scan(1.0, seed=5)

    def test_region_checked(self):
        with pytest.raises(ParameterError):
            metric_equivalence_scan(1.0, region=([-2.0, 0.0], [1.0, 1.0]))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_quasi_triangle(self, alpha):
        assert quasi_triangle_constant(alpha, samples=10_000) <= 2 ** (alpha / 2) + 1e-9


points = st.tuples(st.floats(-1, 1), st.floats(0, 1))


@given(points, points, points, st.sampled_from(ALPHAS))
def test_metric_axioms(x, y, z, alpha):
    dxy, dyx = d_alpha(x, y, alpha), d_alpha(y, x, alpha)
    assert dxy == dyx and dxy >= 0
    assert d_alpha(x, x, alpha) == 0
    assert d_alpha(x, z, alpha) <= dxy + d_alpha(y, z, alpha) + 1e-12


def test_exponent_helpers():
    for a in ALPHAS:
        assert beta_from_gamma(gamma_from_beta(0.4, a), a) == pytest.approx(0.4)
    assert gamma_from_beta(0.5, 2.0) == 1.0


class TestHolder:
    def test_power_function(self):
        x = np.linspace(0, 1, 201)[:, None]
        est = holder_seminorm_points(x, x[:, 0] ** 0.5, 0.5, pairs=10**6)
        assert est.estimate == pytest.approx(1.0, rel=1e-12)

    def test_lipschitz_field(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (21, 11))
        est = holder_seminorm(sample(lambda x, y: 3 * x - 4 * y, g), 1.0, pairs=10**6)
        assert est.estimate == pytest.approx(5.0, rel=1e-12)

    def test_d_alpha_metric(self):
        # y_n^{(2+a)/2} has d_alpha-Lipschitz constant 1
        g = Grid.uniform([(-1, 1), (0, 1)], (11, 21))
        est = holder_seminorm(sample(lambda x, y: y**1.5, g), 1.0, metric="d_alpha", alpha=1.0, pairs=10**6)
        assert est.estimate == pytest.approx(1.0, rel=1e-12)

    def test_deterministic_and_lower_bound(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(3000, 2))
        V = np.sin(3 * X[:, 0]) * X[:, 1]
        a = holder_seminorm_points(X, V, 0.5, pairs=2000, seed=4)
        b = holder_seminorm_points(X, V, 0.5, pairs=2000, seed=4)
        full = holder_seminorm_points(X[:300], V[:300], 0.5, pairs=10**6)
        assert a == b
        assert holder_seminorm_points(X[:300], V[:300], 0.5, pairs=500).estimate <= full.estimate

    def test_stratified_covers_decades(self):
        X = np.random.default_rng(1).uniform(size=(5000, 2))
        I, J = stratified_pairs(X, 700, seed=0)
        d = np.linalg.norm(X[I] - X[J], axis=1)
        assert d.min() < 1e-2 and d.max() > 0.5 and np.all(I != J)

    def test_errors(self):
        X = np.zeros((3, 2))
        with pytest.raises(ParameterError):
            holder_seminorm_points(X, np.zeros(3), 1.5)
        with pytest.raises(ParameterError):
            holder_seminorm_points(X, np.zeros(3), 0.5, metric="d_alpha")
        with pytest.raises(ParameterError):
            holder_seminorm_points(X, np.zeros(3), 0.5, metric="taxicab")
        with pytest.raises(SamplingError):
            holder_seminorm_points(X[:1], np.zeros(1), 0.5)
        with pytest.raises(DomainMembershipError):
            holder_seminorm_points(-np.ones((3, 2)), np.zeros(3), 0.5, metric="d_alpha", alpha=1.0)


class TestConvergence:
    def test_exact_slope(self):
        hs = [0.1, 0.05, 0.025]
        assert convergence_order([(h, 3 * h**2) for h in hs]).slope == pytest.approx(2.0)

    def test_zero_errors(self):
        assert convergence_order([(0.1, 0.0), (0.05, 0.0), (0.025, 0.0)]).slope == float("inf")

    def test_non_monotone_warns(self):
        with pytest.warns(RuntimeWarning):
            out = convergence_order([(0.1, 1e-2), (0.05, 2e-2), (0.025, 1e-3)])
        assert not out.monotone

    def test_monotone_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = convergence_order([(0.025, 1e-3), (0.1, 1e-1), (0.05, 1e-2)])
        assert out.monotone and out.levels == 3

    def test_too_few(self):
        with pytest.raises(ParameterError):
            convergence_order([(0.1, 1.0), (0.05, 0.5)])

    def test_local_slopes(self):
        r = np.array([0.5, 0.25, 0.125])
        assert np.allclose(local_slopes(r, r**3), 3.0)


class TestExpansion:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_recovers_slid_u0(self, alpha):
        tau = 0.3
        k = (1 + alpha) * (2 + alpha)
        g = Grid.uniform([(-1, 1), (0, 1)], (65, 33))
        u = sample(lambda x, y: 0.5 * (x + tau * y) ** 2 + y ** (2 + alpha) / k, g)
        fit = fit_boundary_expansion(u, [0.0, 0.0], alpha)
        assert fit.tau[0] == pytest.approx(tau, abs=1e-8)
        assert fit.a == pytest.approx(1.0, abs=1e-8)
        assert fit.M[0, 0] == pytest.approx(1.0, abs=1e-8)
        assert abs(fit.b) < 1e-8 and fit.residual < 1e-10
        assert fit.slope == SLOPE_CAP

    def test_row_keys(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (33, 17))
        u = sample(lambda x, y: 0.5 * x * x + 2 * y**3 / 6, g)
        row = fit_boundary_expansion(u, [0.0, 0.0], 1.0).row()
        assert row["a"] == pytest.approx(2.0) and set(row) >= {"z", "Q0_11", "tau", "slope", "residual"}

    def test_negative_a_rejected(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (33, 17))
        u = sample(lambda x, y: 0.5 * x * x - y**3 / 6, g)
        with pytest.raises(FitError):
            fit_boundary_expansion(u, [0.0, 0.0], 1.0)

    def test_empty_window(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (9, 5))
        u = sample(lambda x, y: 0.5 * x * x + y**3 / 6, g)
        with pytest.raises(FitError):
            fit_boundary_expansion(u, [0.0, 0.0], 1.0, radii=[1e-3], fit_radius=1e-3)


class TestNormalExponent:
    @pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
    def test_recovers_exponent(self, p):
        t = np.linspace(0, 0.3, 80)[1:]
        fit = fit_normal_exponent(t, 0.7 * t + 2 * t**p + 0.5 * t ** (p + 1))
        assert fit.exponent == pytest.approx(p, abs=1e-6)
        assert fit.coefficients[0] == pytest.approx(0.7, abs=1e-8)

    def test_too_few(self):
        with pytest.raises(FitError):
            fit_normal_exponent([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])

    def test_profile_polar_nodes(self):
        g = Grid.polar(1.0, 33)
        u = sample(lambda x, y: x * x + y * y - 1.0, g)
        t, v = normal_profile(u, [1.0, 0.0], BallDomain(1.0), 0.5)
        assert np.all((t > 0) & (t <= 0.5))
        assert np.allclose(v, (1 - t) ** 2 - 1, atol=1e-12)
        t2, v2 = normal_profile(u, [np.cos(0.1), np.sin(0.1)], BallDomain(1.0), 0.5, samples=20)
        assert len(t2) == 20 and np.allclose(v2, (1 - t2) ** 2 - 1, atol=1e-3)
