import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degma.errors import EvaluationError, ParameterError, RangeError
from degma.fields import (Grid, ScalarField, det_hessian, discrete_convexity_check, export_csv_slice,
                          hessian_fd, load_field, sample, save_field, wide_stencil_det)
from degma.geometry import U0


def unit_strip(n=5):
    return Grid.uniform([(-1, 1), (0, 1)], (n, n))


class TestGrid:
    def test_rejects_short_or_unsorted_axes(self):
        with pytest.raises(ParameterError):
            Grid((np.array([0.0, 1.0]), np.linspace(0, 1, 5)))
        with pytest.raises(ParameterError):
            Grid((np.array([0.0, 2.0, 1.0]), np.linspace(0, 1, 5)))

    def test_graded_nodes(self):
        g = Grid.graded([(-1, 1), (0, 1)], (9, 33), stretch=4.0)
        y = g.axes[1]
        assert y[0] == 0 and y[-1] == 1 and np.all(np.diff(y) > 0)
        assert np.diff(y)[0] < np.diff(y)[-1]

    def test_polar_center(self):
        g = Grid.polar(1.0, 9)
        assert g.axes[0][0] == 0.0 and g.shape == (9, 8)


class TestSample:
    def test_U0_value(self):
        u = sample(lambda x, y: U0(np.stack([x, y], -1), 1.0), unit_strip())
        assert u.values[2, 4] == pytest.approx(1 / 6, abs=1e-15)

    def test_zero(self):
        assert not np.any(sample(lambda x, y: 0 * x, unit_strip()).values)

    def test_half_square(self):
        assert sample(lambda x, y: 0.5 * x**2, unit_strip()).values[4, 0] == 0.5

    def test_nonfinite_reports_node(self):
        with pytest.raises(EvaluationError) as ei:
            sample(lambda x, y: 1.0 / y, unit_strip())
        assert ei.value.index[1] == 0


class TestHessian:
    @given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
    def test_exact_on_quadratics(self, c):
        g = Grid.graded([(-1, 1), (0, 1)], (9, 11), stretch=3.0)
        a, b, d, e, f, k = c
        u = sample(lambda x, y: a * x * x + b * x * y + d * y * y + e * x + f * y + k, g)
        H = hessian_fd(u, (4, 5)).matrix
        assert np.allclose(H, [[2 * a, b], [b, 2 * d]], atol=1e-10)

    def test_cross_term(self):
        u = sample(lambda x, y: x * y, Grid.uniform([(-1, 1), (-1, 1)], (7, 7)))
        assert np.allclose(hessian_fd(u, (3, 3)).matrix, [[0, 1], [1, 0]], atol=1e-13)

    def test_U0_alpha2(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (65, 65))
        u = sample(lambda x, y: U0(np.stack([x, y], -1), 2.0), g)
        hs = hessian_fd(u, [0.0, 0.5])
        assert np.allclose(hs.matrix, np.diag([1.0, 0.25]), atol=1e-4)
        assert not hs.one_sided

    def test_floor_flagged(self):
        u = sample(lambda x, y: x * x + y * y, unit_strip(7))
        assert hessian_fd(u, (3, 0)).one_sided

    def test_outside_grid(self):
        with pytest.raises(RangeError):
            hessian_fd(sample(lambda x, y: x, unit_strip()), (9, 9))

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        u = ScalarField(unit_strip(9), rng.normal(size=(9, 9)))
        H = hessian_fd(u, (4, 4)).matrix
        assert np.max(np.abs(H - H.T)) <= 1e-12


class TestDeterminant:
    def square(self, f, n=21):
        return sample(f, Grid.uniform([(-1, 1), (-1, 1)], (n, n)))

    @pytest.mark.parametrize("scheme", ["standard", "wide"])
    def test_half_square(self, scheme):
        u = self.square(lambda x, y: 0.5 * (x * x + y * y))
        assert det_hessian(u, (10, 10), scheme) == pytest.approx(1.0, abs=1e-12)

    def test_U0(self):
        u = sample(lambda x, y: U0(np.stack([x, y], -1), 1.0), Grid.uniform([(-1, 1), (0, 1)], (21, 21)))
        assert det_hessian(u, [0.0, 0.5]) == pytest.approx(0.5, abs=1e-12)

    def test_mixed_quadratic(self):
        u = self.square(lambda x, y: 0.5 * x * x + 2 * y * y + x * y)
        assert det_hessian(u, (10, 10)) == pytest.approx(3.0, abs=1e-11)

    def test_edge_node(self):
        with pytest.raises(RangeError):
            det_hessian(self.square(lambda x, y: x * x), (0, 5))

    def test_wide_below_standard_and_converges(self):
        a = 0.5
        f = lambda x, y: U0(np.stack([x, y], -1), a) + 0.1 * x * y
        prev = None
        for n in (33, 65):
            g = Grid.uniform([(-1, 1), (0, 2)], (n, n))
            u = sample(f, g)
            P, k, _, _ = wide_stencil_det(u)
            i, j = (n - 1) // 2, (n - 1) // 2
            std = det_hessian(u, (i, j))
            assert P[i, j] <= std + 0.05
            err = abs(P[i, j] - (g.axes[1][j] ** a - 0.01))
            if prev is not None:
                assert err < prev
            prev = err


class TestConvexity:
    def test_cases(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (11, 11))
        assert discrete_convexity_check(sample(lambda x, y: 0.5 * (x * x + y * y), g))
        rep = discrete_convexity_check(sample(lambda x, y: -0.5 * (x * x + y * y), g))
        assert not rep and rep.worst_value < 0
        assert discrete_convexity_check(sample(lambda x, y: U0(np.stack([x, y], -1), 1.0), g))

    def test_every_interior_node_fails_for_concave(self):
        g = Grid.uniform([(-1, 1), (-1, 1)], (9, 9))
        u = sample(lambda x, y: -0.5 * (x * x + y * y), g)
        for i in range(1, 8):
            for j in range(1, 8):
                m = np.zeros(g.shape, bool)
                m[i, j] = True
                assert not discrete_convexity_check(u.with_values(u.values, mask=m))


class TestInterpolation:
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_reproduces_affine(self, a, b, c):
        g = Grid.graded([(-1, 1), (0, 1)], (7, 9), stretch=2.0)
        u = sample(lambda x, y: a * x + b * y + c, g)
        p = np.array([[0.13, 0.71], [-0.9, 0.05], [0.5, 0.5]])
        assert np.allclose(u.interpolate(p, method="linear"), a * p[:, 0] + b * p[:, 1] + c, atol=1e-12)

    def test_cubic_accuracy(self):
        g = Grid.uniform([(-1, 1), (0, 1)], (41, 21))
        u = sample(lambda x, y: np.sin(x) * np.exp(y), g)
        p = np.array([[0.123, 0.456], [-0.77, 0.91]])
        assert np.allclose(u.interpolate(p), np.sin(p[:, 0]) * np.exp(p[:, 1]), atol=1e-6)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        g = Grid.graded([(-1, 1), (0, 1)], (7, 9), stretch=2.0)
        u = sample(lambda x, y: x * y + 1, g, role="test", alpha=1.5)
        paths = save_field(u, tmp_path / "u")
        meta = json.loads(paths[0].read_text())
        assert meta["role"] == "test" and meta["alpha"] == 1.5
        assert paths[1].read_bytes() == np.ascontiguousarray(u.values, "<f8").tobytes()
        v = load_field(paths[1])
        assert np.array_equal(v.values, u.values) and v.grid.shape == g.shape

    def test_csv_slice_3d_drops_axis(self, tmp_path):
        g = Grid.uniform([(0, 1), (0, 2), (0, 3)], (3, 4, 5))
        u = sample(lambda x, y, z: x + 10 * y + 100 * z, g)
        p = export_csv_slice(u, tmp_path / "s.csv", axis=1, index=2)
        rows = p.read_text().splitlines()
        assert rows[0] == "x,y,value" and len(rows) == 1 + 3 * 5
        x, z, val = map(float, rows[1 + 5 * 2 + 3].split(","))
        assert val == pytest.approx(x + 10 * g.axes[1][2] + 100 * z)
