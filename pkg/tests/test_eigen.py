import numpy as np
import pytest

from frozen_values import EIGEN_BOUNDARY_SLOPE, LAMBDA_B1
from degma.eigen import (EigenReport, boundary_factor, eigen_residual, regularity_probe, richardson,
                         solve_eigen)
from degma.errors import NonConvergenceError, ParameterError
from degma.fields import Grid, ScalarField, sample
from degma.geometry import BallDomain, PolytopeDomain
from degma.ma_solver import MAProblem, solve_dirichlet


@pytest.fixture(scope="module")
def disk65():
    return solve_eigen(BallDomain(1.0), Grid.polar(1.0, 65, stretch=4.0))


@pytest.fixture(scope="module")
def disk33():
    return solve_eigen(BallDomain(1.0), Grid.polar(1.0, 33, stretch=4.0))


class TestSolve:
    def test_invariants(self, disk65):
        u = disk65.u.values
        assert disk65.lam > 0 and disk65.residual <= 1e-6
        assert np.max(np.abs(u)) == pytest.approx(1.0, abs=1e-12)
        b = disk65.u.grid.boundary_mask()
        assert np.all(u[b] == 0.0) and np.all(u[~b] < 0)

    def test_matches_radial_oracle(self, disk33, disk65):
        assert disk65.lam == pytest.approx(LAMBDA_B1, rel=1e-3)
        assert richardson(disk33.lam, disk65.lam) == pytest.approx(LAMBDA_B1, rel=1e-5)

    def test_residual_function(self, disk65):
        assert eigen_residual(disk65.u, disk65.lam, disk65.domain) == pytest.approx(disk65.residual)

    def test_scaling_law(self, disk33):
        r2 = solve_eigen(BallDomain(2.0), Grid.polar(2.0, 33, stretch=4.0))
        assert 4 * r2.lam == pytest.approx(disk33.lam, rel=1e-6)

    def test_monotone_residual_flags(self, disk65):
        h = disk65.residual_history
        bad = [k for k in range(4, len(h)) if h[k] > h[k - 1]]
        assert bad == disk65.residual_flags

    def test_domain_monotonicity(self):
        big = solve_eigen(PolytopeDomain.box([-1, -1], [1, 1]), Grid.uniform([(-1, 1), (-1, 1)], (33, 33)))
        small = solve_eigen(PolytopeDomain.box([-0.8, -0.8], [0.8, 0.8]),
                            Grid.uniform([(-0.8, 0.8), (-0.8, 0.8)], (33, 33)))
        disk = solve_eigen(BallDomain(1.5), Grid.polar(1.5, 33, stretch=4.0))
        assert small.lam >= big.lam >= disk.lam
        # the square of half-side 1 sits between B_1 and B_sqrt2
        assert LAMBDA_B1 / 2 < big.lam < LAMBDA_B1

    def test_plateau_raises(self):
        with pytest.raises(NonConvergenceError) as ei:
            solve_eigen(BallDomain(1.0), Grid.polar(1.0, 17), tol=1e-30, max_outer=3)
        assert ei.value.report.iterations == 3

    def test_json(self, disk33):
        d = disk33.to_json()
        assert d["lambda"] == disk33.lam and len(d["residual_history"]) == disk33.iterations


class TestHomogeneity:
    def test_inner_solve_scales(self, disk33):
        # det D^2 v = |c u|^n gives c v: the next normalized iterate is unchanged
        grid, dom = disk33.u.grid, disk33.domain
        interior = ~grid.boundary_mask()
        g = np.where(interior, np.abs(disk33.u.values) ** 2, 0.0)
        c = 3.0
        v1 = solve_dirichlet(MAProblem(dom, grid, alpha=0.0, g=g), tol=1e-12).solution.values
        v2 = solve_dirichlet(MAProblem(dom, grid, alpha=0.0, g=c**2 * g), tol=1e-12).solution.values
        assert np.max(np.abs(v2 - c * v1)) < 1e-10
        assert np.max(np.abs(v2 / np.max(np.abs(v2)) - v1 / np.max(np.abs(v1)))) < 1e-10


class TestBoundaryFactor:
    def test_radial_and_positive(self, disk65):
        bf = boundary_factor(disk65, 0.1)
        assert bf.angular_variation() <= 1e-3
        assert bf.min_value > 1.4
        # g tends to the oracle's boundary slope |u'(1)| at the rim
        assert bf.values[np.argmin(bf.distance)] == pytest.approx(EIGEN_BOUNDARY_SLOPE, rel=2e-3)

    def test_scaling(self, disk33):
        t = 2.0
        g1 = disk33.u.grid
        gt = Grid((g1.axes[0] * t, g1.axes[1]), kind="polar")
        ut = ScalarField(gt, t**2 * disk33.u.values)
        rep_t = EigenReport(disk33.lam / t**2, ut, BallDomain(t), [0.0], [0.0], 1)
        b1 = boundary_factor(disk33, 0.2)
        bt = boundary_factor(rep_t, 0.4)
        assert np.allclose(np.sort(bt.values), np.sort(t * b1.values), rtol=1e-10)

    def test_empty_band(self, disk33):
        with pytest.raises(ParameterError):
            boundary_factor(disk33, 0.0)
        with pytest.raises(ParameterError):
            boundary_factor(disk33, 1e-6)


class TestRegularity:
    def test_surrogate_constant_hessian(self):
        g = Grid.polar(1.0, 33, stretch=4.0)
        u = sample(lambda x, y: 0.5 * (x * x + y * y) - 0.5, g)
        rep = EigenReport(1.0, u, BallDomain(1.0), [0.0], [1.0], 1)
        for beta in (0.3, 0.9):
            assert regularity_probe(rep, beta, n_points=100).estimate < 1e-8

    def test_window_stability(self, disk65):
        r129 = solve_eigen(BallDomain(1.0), Grid.polar(1.0, 129, stretch=4.0))
        a, b = regularity_probe(disk65, 0.4).estimate, regularity_probe(r129, 0.4).estimate
        assert max(a, b) / min(a, b) <= 1.2

    def test_beta_range(self, disk33):
        with pytest.raises(ParameterError):
            regularity_probe(disk33, 1.0)
