import numpy as np
import pytest
from hypothesis import given, strategies as st

from degma.errors import ConvexityError, ParameterError, RangeError, TransformError
from degma.fields import Grid, sample
from degma.geometry import BallDomain
from degma.transforms import (gauss_curvature, gradient_field, hessian_inverse_check, hodograph,
                              hodograph_residual, legendre_involution_error, partial_legendre,
                              quadratic_interpolation_bound, rotate_graph,
                              transformed_pde_residual)


def u0_field(alpha, N, a=1.0):
    k = (1 + alpha) * (2 + alpha)
    g = Grid.uniform([(-1, 1), (0, 1)], (N, N))
    return sample(lambda x, y: 0.5 * a * x**2 + y ** (2 + alpha) / (a * k), g), k


class TestLegendre:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_u0_conjugate(self, alpha):
        u, k = u0_field(alpha, 65)
        pair = partial_legendre(u)
        Y, T = pair.ustar.grid.coords()
        exact = 0.5 * Y**2 - T ** (2 + alpha) / k
        assert np.max(np.abs(pair.ustar.values - exact)[pair.valid]) < 1e-12

    def test_a_scaling(self):
        # conjugate of a x^2/2 is y^2/(2a)
        u, k = u0_field(1.0, 65, a=2.0)
        pair = partial_legendre(u)
        Y, T = pair.ustar.grid.coords()
        exact = Y**2 / 4.0 - T**3 / (2.0 * k)
        assert np.max(np.abs(pair.ustar.values - exact)[pair.valid]) < 1e-12

    @pytest.mark.parametrize("mode", ["spline", "exact"])
    def test_involution_quadratic(self, mode):
        u, _ = u0_field(1.0, 65)
        pair = partial_legendre(u, mode=mode)
        err = legendre_involution_error(pair)
        assert err <= 5 * quadratic_interpolation_bound(pair)
        if mode == "spline":
            assert err < 1e-12

    def test_involution_nonquadratic_within_bound(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (65, 33))
        u = sample(lambda x, y: np.cosh(x) * (1 + y) + y**3, g)
        for mode in ("spline", "exact"):
            pair = partial_legendre(u, mode=mode)
            assert legendre_involution_error(pair) <= 5 * quadratic_interpolation_bound(pair)

    def test_hessian_inverse_identity(self):
        u, _ = u0_field(1.0, 65)
        pts = np.array([[0.0, 0.5], [0.3, 0.2], [-0.4, 0.7]])
        assert hessian_inverse_check(partial_legendre(u), pts) < 1e-9

    def test_hessian_inverse_half(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (65, 33))
        u = sample(lambda x, y: x**2 + y**3, g)
        pair = partial_legendre(u)
        assert hessian_inverse_check(pair, [[0.2, 0.5]]) < 1e-9
        Hs = np.diff(pair.ustar.values, 2, axis=0) / (pair.y_spacing**2)
        assert np.allclose(Hs[pair.valid[1:-1]], 0.5, atol=1e-9)

    def test_range_error(self):
        u, _ = u0_field(1.0, 33)
        with pytest.raises(RangeError):
            hessian_inverse_check(partial_legendre(u), [[-1.0, 0.5]])

    def test_convexity_error_names_slice(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (33, 17))
        u = sample(lambda x, y: x**2 * (y - 0.5), g)
        with pytest.raises(ConvexityError, match=r"slice 0 \(x_n=0\)"):
            partial_legendre(u)

    def test_bad_mode_and_grid(self):
        u, _ = u0_field(1.0, 17)
        with pytest.raises(ParameterError):
            partial_legendre(u, mode="fft")
        with pytest.raises(ParameterError):
            partial_legendre(sample(lambda r, t: r**2, Grid.polar(1.0, 17)))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_conjugate_equation_exact(self, alpha):
        # u* = y^2/2 - x_n^{2+a}/k satisfies x_n^a det D^2 u* + u*_nn = 0
        u, _ = u0_field(alpha, 129)
        R = transformed_pde_residual(partial_legendre(u), alpha=alpha, power=0.0)
        r = np.max(np.abs(R.values[R.mask]))
        h = 1.0 / 128
        # cubic profile: exact; quartic: second difference is off by h^2 u''''/12 = h^2/6
        bound = {0.5: 2e-2, 1.0: 1e-10, 2.0: h**2 / 6 * 1.001}[alpha]
        assert r < bound


@st.composite
def convex_slices(draw):
    n = draw(st.integers(8, 24))
    c = np.array(draw(st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3)))
    shift = draw(st.floats(-0.5, 0.5))
    return n, c, shift


@given(convex_slices())
def test_fenchel_inequality(data):
    n, c, shift = data
    g = Grid.uniform([(-1, 1), (0, 1)], (n, 5))
    u = sample(lambda x, y: c[0] * (x - shift) ** 2 + c[1] * x**4 + c[2] * y * x, g)
    pair = partial_legendre(u, mode="exact")
    X = g.axes[0][:, None, None]
    Y = pair.ustar.grid.axes[0][None, :, None]
    lhs = u.values[:, None, :] + pair.ustar.values[None, :, :]
    assert np.all(lhs >= X * Y - 1e-12)


@given(convex_slices(), st.floats(0.0, 1.0))
def test_order_reversal(data, bump):
    n, c, shift = data
    g = Grid.uniform([(-1, 1), (0, 1)], (n, 5))
    u = sample(lambda x, y: c[0] * (x - shift) ** 2 + c[1] * x**4, g)
    v = u.with_values(u.values + bump * (1 + g.coords()[0] ** 2))
    pu, pv = partial_legendre(u, mode="exact"), partial_legendre(v, mode="exact")
    # evaluate both conjugates on the same slopes
    from degma import _kernels
    y = pu.ustar.grid.axes[0]
    for j in range(5):
        a, _ = _kernels.conjugate(g.axes[0], u.values[:, j], y)
        b, _ = _kernels.conjugate(g.axes[0], v.values[:, j], y)
        assert np.all(b <= a + 1e-12)
    assert pv.mode == "exact"


class TestHodograph:
    def test_plane(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (33, 33))
        u = sample(lambda x, y: -y, g)
        hg = hodograph(u, (0.0, 0.0), half_width=0.5, height=0.5, shape=(17, 17))
        Y1, Y2 = hg.field.grid.coords()
        assert np.max(np.abs(hg.field.values - Y2)) < 1e-12

    def test_parabola_is_explicit(self):
        # -u = y - y^2/4 on [0,1] inverts to tu = 2 - 2 sqrt(1 - y)
        g = Grid.uniform([(-1, 1), (0, 1.5)], (65, 97))
        u = sample(lambda x, y: y * y / 4 - y, g)
        hg = hodograph(u, (0.0, 0.0), half_width=0.5, height=0.5, shape=(17, 33))
        Y1, Y2 = hg.field.grid.coords()
        assert np.max(np.abs(hg.field.values - (2 - 2 * np.sqrt(1 - Y2)))) < 1e-6

    def test_gauss_curvature_invariant(self):
        g = Grid.uniform([(-1.1, 1.1), (-1.1, 1.1)], (177, 177))
        u = sample(lambda x, y: 0.5 * (x * x + y * y) - 0.5, g)
        hg = hodograph(u, (0.0, -1.0), BallDomain(1.0), half_width=0.3, height=0.2, shape=(33, 33))
        K = gauss_curvature(hg.field)
        Y1, Y2 = hg.field.grid.coords()
        P = hg.to_physical(Y1, hg.field.values)
        Ku = 1.0 / (1.0 + np.sum(P**2, axis=-1)) ** 2
        inner = (slice(3, -3), slice(3, -3))
        assert np.max(np.abs(np.abs(K[inner]) - Ku[inner])) < 2e-3

    def test_non_monotone_raises(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (33, 33))
        u = sample(lambda x, y: (y - 0.5) ** 2 - 0.25, g)
        with pytest.raises(TransformError, match="slice"):
            hodograph(u, (0.0, 0.0), half_width=0.2, height=0.2, shape=(9, 9))

    def test_residual_masks_boundary(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (17, 17))
        u = sample(lambda x, y: -y, g)
        hg = hodograph(u, (0.0, 0.0), half_width=0.5, height=0.5, shape=(9, 9))
        R = hodograph_residual(hg.field)
        assert not R.mask[0].any() and np.all(R.values[~R.mask] == 0)
        # plane: det = 0, tu_n = 1 so the residual is -y_n^2
        Y1, Y2 = hg.field.grid.coords()
        assert np.allclose(R.values[R.mask], -(Y2**2)[R.mask], atol=1e-10)

    def test_3d_rejected(self):
        g = Grid.uniform([(-1, 1)] * 3, (5, 5, 5))
        with pytest.raises(ParameterError):
            hodograph(sample(lambda x, y, z: -z, g), (0.0, 0.0, 0.0))


def test_rotate_graph_isometry():
    rng = np.random.default_rng(3)
    p, q = rng.standard_normal((2, 50, 3))
    a, b = rotate_graph(p), rotate_graph(q)
    assert np.allclose(np.linalg.norm(a - b, axis=-1), np.linalg.norm(p - q, axis=-1))
    assert np.allclose(rotate_graph([1.0, 2.0, 3.0]), [1.0, -3.0, 2.0])
    with pytest.raises(ParameterError):
        rotate_graph([1.0, 2.0])


def test_gradient_polar_and_cartesian():
    g = Grid.uniform([(-1, 1), (-1, 1)], (33, 33))
    G = gradient_field(sample(lambda x, y: x * x + 3 * y, g))
    X, Y = g.coords()
    assert np.allclose(G[..., 0], 2 * X) and np.allclose(G[..., 1], 3.0)
    gp = Grid.polar(1.0, 33)
    Gp = gradient_field(sample(lambda x, y: 2 * x - y, gp))
    # centered angular differences scale the tangential part by sin(dth)/dth
    dth = gp.axes[1][1] - gp.axes[1][0]
    tol = 2.5 * (1 - np.sin(dth) / dth)
    assert np.allclose(Gp[..., 0], 2.0, atol=tol) and np.allclose(Gp[..., 1], -1.0, atol=tol)
    assert np.allclose(Gp[0], [2.0, -1.0], atol=tol)
