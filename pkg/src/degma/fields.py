"""Tensor grids, sampled fields, finite-difference Hessians and discrete determinants.

Two grid families are supported:

* ``cartesian``: per-axis node arrays (uniform or geometrically graded), n = 2 or 3.
  Field values have shape ``grid.shape`` with axis order (x_1, ..., x_n).
* ``polar``: 2D disk grids with axes (r, theta).  ``r[0] == 0`` is the center;
  every column of the first row stores the same center value.  theta is
  periodic and excludes 2*pi.

Second derivatives use 3-point nonuniform stencils (exact on quadratics),
mixed derivatives the tensor product of first-derivative stencils, and
4-point one-sided stencils on the outer layer of the grid (flagged).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from . import _kernels
from .errors import EvaluationError, ParameterError, RangeError

Scheme = Literal["standard", "wide"]

# lattice frames for the monotone wide stencil: each vector and its perpendicular
DEFAULT_FRAMES = ((1, 0), (1, 1), (2, 1), (1, 2), (3, 1), (1, 3), (3, 2), (2, 3))


def fd_weights(x0: float, xs: Sequence[float], m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at ``x0`` (Fornberg).

    Parameters
    ----------
    x0 : float
        Evaluation point.
    xs : sequence of float
        Distinct stencil nodes.
    m : int
        Derivative order, ``m < len(xs)``.

    Returns
    -------
    ndarray
        Weights ``w`` with ``sum(w * f(xs)) ~ f^(m)(x0)``.
    """
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def graded_nodes(a: float, b: float, n: int, stretch: float = 1.0,
                 toward: Literal["low", "high"] = "low") -> np.ndarray:
    """``n`` nodes on [a, b] with geometric spacing.

    The nodes are the images of a uniform grid under the fixed map
    ``xi -> (stretch**xi - 1) / (stretch - 1)``, so the per-cell ratio is
    ``stretch ** (1/(n-1))`` and the grid with ``2n - 1`` nodes contains the
    grid with ``n`` nodes.  Largest/smallest cell is ``stretch**((n-2)/(n-1))``.
    """
    if n < 3:
        raise ParameterError("need at least 3 nodes per axis")
    if not b > a:
        raise ParameterError("empty interval")
    if stretch < 1.0:
        raise ParameterError("stretch must be >= 1")
    xi = np.linspace(0.0, 1.0, n)
    if stretch == 1.0:
        x = xi
    else:
        x = np.expm1(xi * np.log(stretch)) / (stretch - 1.0)
    if toward == "high":
        x = 1.0 - x[::-1]
    out = a + (b - a) * x
    out[0], out[-1] = a, b
    return out


def cell_ratio(stretch: float, n: int) -> float:
    """Per-cell geometric ratio of a ``graded_nodes`` axis."""
    return stretch ** (1.0 / (n - 1))


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product grid.

    Attributes
    ----------
    axes : tuple of ndarray
        Node coordinates per axis, strictly increasing.  For ``kind="polar"``
        these are (r, theta).
    kind : {"cartesian", "polar"}
    """

    axes: tuple
    kind: str = "cartesian"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        axes = tuple(np.array(a, dtype=float) for a in self.axes)
        for k, a in enumerate(axes):
            if a.ndim != 1 or len(a) < 3:
                raise ParameterError(f"axis {k} needs at least 3 nodes")
            if not np.all(np.diff(a) > 0):
                raise ParameterError(f"axis {k} is not strictly increasing")
            a.setflags(write=False)
        if self.kind not in ("cartesian", "polar"):
            raise ParameterError(f"unknown grid kind {self.kind!r}")
        if self.kind == "polar":
            if len(axes) != 2:
                raise ParameterError("polar grids are 2D")
            r, th = axes
            if r[0] != 0.0:
                raise ParameterError("polar radial axis must start at 0")
            m = len(th)
            if m % 4 or not np.allclose(th, 2 * np.pi * np.arange(m) / m, atol=1e-13):
                raise ParameterError("polar angles must be uniform, periodic, count divisible by 4")
        elif len(axes) not in (2, 3):
            raise ParameterError("cartesian grids are 2D or 3D")
        object.__setattr__(self, "axes", axes)

    # construction -------------------------------------------------------
    @classmethod
    def uniform(cls, bounds, shape) -> "Grid":
        """``bounds`` is a sequence of (lo, hi) pairs, ``shape`` the node counts."""
        return cls(tuple(np.linspace(lo, hi, m) for (lo, hi), m in zip(bounds, shape)))

    @classmethod
    def graded(cls, bounds, shape, stretch: float = 4.0, axis: int = -1,
               toward: str = "low") -> "Grid":
        """Uniform in every axis except ``axis``, which is graded toward ``toward``."""
        nd = len(shape)
        axis = axis % nd
        axes = []
        for k, ((lo, hi), m) in enumerate(zip(bounds, shape)):
            if k == axis:
                axes.append(graded_nodes(lo, hi, m, stretch, toward))
            else:
                axes.append(np.linspace(lo, hi, m))
        return cls(tuple(axes))

    @classmethod
    def polar(cls, radius: float, n_r: int, n_theta: int | None = None,
              stretch: float = 1.0) -> "Grid":
        """Disk grid of the given radius, radial nodes graded toward the rim.

        ``n_theta`` defaults to ``n_r - 1`` rounded up to a multiple of 8.
        """
        if radius <= 0:
            raise ParameterError("radius must be positive")
        if n_theta is None:
            n_theta = int(8 * np.ceil((n_r - 1) / 8))
        r = graded_nodes(0.0, radius, n_r, stretch, toward="high")
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        return cls((r, th), kind="polar")

    # geometry -------------------------------------------------------------
    @property
    def ndim(self) -> int:
        return 2 if self.kind == "polar" else len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_uniform(self) -> bool:
        if self.kind != "cartesian":
            return False
        return all(np.allclose(np.diff(a), a[1] - a[0], rtol=1e-10, atol=0) for a in self.axes)

    def spacing(self, axis: int) -> np.ndarray:
        return np.diff(self.axes[axis])

    @property
    def h(self) -> float:
        """Largest cell size over the Cartesian axes (radial axis for polar grids)."""
        if self.kind == "polar":
            r = self.axes[0]
            return float(max(np.diff(r).max(), r[-1] * (self.axes[1][1] - self.axes[1][0])))
        return float(max(np.diff(a).max() for a in self.axes))

    def coords(self) -> list:
        """Physical Cartesian coordinate arrays, each of shape ``self.shape``."""
        key = "coords"
        if key not in self._cache:
            if self.kind == "polar":
                R, T = np.meshgrid(*self.axes, indexing="ij")
                out = [R * np.cos(T), R * np.sin(T)]
                out[0][0, :] = 0.0
                out[1][0, :] = 0.0
            else:
                out = list(np.meshgrid(*self.axes, indexing="ij"))
            for a in out:
                a.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def points(self) -> np.ndarray:
        """Node coordinates stacked on the last axis: shape ``(*shape, n)``."""
        return np.stack(self.coords(), axis=-1)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        if self.kind == "polar":
            return bool(np.hypot(p[0], p[1]) <= self.axes[0][-1] * (1 + tol))
        return all(a[0] - tol <= x <= a[-1] + tol for a, x in zip(self.axes, p))

    def boundary_mask(self) -> np.ndarray:
        """Outer layer of a Cartesian box, outer ring of a polar grid."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.kind == "polar":
            mask[-1, :] = True
            return mask
        for k in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def locate(self, p, tol: float | None = None) -> tuple:
        """Index of the node closest to ``p`` (raises RangeError if ``p`` is off-grid)."""
        p = np.asarray(p, dtype=float)
        if len(p) != self.ndim:
            raise RangeError(f"point has dimension {len(p)}, grid has {self.ndim}")
        if not self.contains(p, tol=1e-9):
            raise RangeError(f"point {p.tolist()} outside the grid")
        if self.kind == "polar":
            pts = self.points().reshape(-1, 2)
            k = int(np.argmin(np.sum((pts - p) ** 2, axis=1)))
            return np.unravel_index(k, self.shape)
        return tuple(int(np.argmin(np.abs(a - x))) for a, x in zip(self.axes, p))

    def to_json(self) -> dict:
        return {"kind": self.kind, "axes": [a.tolist() for a in self.axes]}

    @classmethod
    def from_json(cls, d: dict) -> "Grid":
        return cls(tuple(np.asarray(a) for a in d["axes"]), kind=d.get("kind", "cartesian"))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values of a function on a grid.

    ``mask`` (optional) marks the active nodes of a masked computational
    domain; inactive nodes still carry finite values (usually an extension of
    the boundary data).
    """

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None
    role: str = ""
    alpha: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.size != self.grid.size:
            raise ParameterError(f"values have {v.size} entries, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            bad = np.unravel_index(int(np.argmin(np.isfinite(v))), v.shape)
            raise EvaluationError(f"non-finite value at node {tuple(int(i) for i in bad)}", bad)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values, **kw) -> "ScalarField":
        args = dict(grid=self.grid, values=values, mask=self.mask, role=self.role, alpha=self.alpha)
        args.update(kw)
        return ScalarField(**args)

    def __call__(self, points, method: str = "cubic") -> np.ndarray:
        return self.interpolate(points, method)

    def interpolate(self, points, method: str = "cubic") -> np.ndarray:
        """Interpolate at physical points of shape ``(..., n)``.

        ``method`` is ``"linear"`` (multilinear, reproduces affine functions)
        or ``"cubic"``.
        """
        pts = np.asarray(points, dtype=float)
        lead = pts.shape[:-1]
        pts = pts.reshape(-1, pts.shape[-1])
        interp = self._interpolator(method)
        if self.grid.kind == "polar":
            r = np.hypot(pts[:, 0], pts[:, 1])
            th = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
            rmax = self.grid.axes[0][-1]
            if np.any(r > rmax * (1 + 1e-12)):
                raise RangeError("interpolation point outside the disk grid")
            q = np.column_stack([np.minimum(r, rmax), th])
        else:
            q = pts
            for k, a in enumerate(self.grid.axes):
                bad = (q[:, k] < a[0] - 1e-12 * max(1, abs(a[0]))) | (q[:, k] > a[-1] + 1e-12 * max(1, abs(a[-1])))
                if np.any(bad):
                    raise RangeError(f"interpolation point {q[np.argmax(bad)].tolist()} outside the grid")
                q[:, k] = np.clip(q[:, k], a[0], a[-1])
        return interp(q).reshape(lead)

    def _interpolator(self, method):
        key = ("interp", method)
        cache = self.__dict__.setdefault("_icache", {})
        if key not in cache:
            if method not in ("linear", "cubic"):
                raise ParameterError(f"unknown interpolation method {method!r}")
            if self.grid.kind == "polar":
                r, th = self.grid.axes
                pad = 3
                m = len(th)
                dth = th[1] - th[0]
                thp = np.concatenate([th[-pad:] - 2 * np.pi, th, th[:pad] + 2 * np.pi])
                vals = np.concatenate([self.values[:, -pad:], self.values, self.values[:, :pad]], axis=1)
                assert len(thp) == m + 2 * pad and abs(thp[pad] - 0.0) < dth
                cache[key] = _make_interpolator((r, thp), vals, method)
            else:
                cache[key] = _make_interpolator(self.grid.axes, self.values, method)
        return cache[key]


def _make_interpolator(axes, values, method):
    """Callable ``q -> values`` on points of shape (m, n).

    Cubic 2D data go through an interpolating tensor spline; cubic 3D data
    through RegularGridInterpolator with a direct solve (its default
    iterative spline solve is only accurate to about 1e-5).
    """
    if method == "cubic" and len(axes) == 2:
        spl = RectBivariateSpline(axes[0], axes[1], values, kx=3, ky=3, s=0)
        return lambda q: spl.ev(q[:, 0], q[:, 1])
    if method == "cubic":
        return RegularGridInterpolator(axes, values, method="cubic", solver=spla.spsolve)
    return RegularGridInterpolator(axes, values, method=method)


@dataclass(frozen=True)
class HessianSample:
    """Discrete Hessian at one node (Cartesian components)."""

    point: np.ndarray
    matrix: np.ndarray
    stencil_width: int = 1
    one_sided: bool = False
    index: tuple = ()


def sample(f: Callable, grid: Grid, role: str = "", alpha: float | None = None) -> ScalarField:
    """Evaluate ``f(x_1, ..., x_n)`` (vectorized, physical coordinates) on the nodes."""
    X = grid.coords()
    with np.errstate(all="ignore"):
        v = np.asarray(f(*X), dtype=float)
    v = np.broadcast_to(v, grid.shape).copy()
    if not np.all(np.isfinite(v)):
        bad = np.unravel_index(int(np.argmin(np.isfinite(v))), v.shape)
        raise EvaluationError(f"f is not finite at node {tuple(int(i) for i in bad)}", bad)
    return ScalarField(grid, v, role=role, alpha=alpha)


# ---------------------------------------------------------------------------
# sparse difference operators


def axis_operator(x: np.ndarray, order: int, periodic: bool = False) -> sp.csr_matrix:
    """1D derivative matrix of the given order on nodes ``x``.

    Interior rows use the 3-point stencil; the two end rows use one-sided
    stencils (3 points for first, 4 for second derivatives).  ``periodic``
    assumes uniform spacing with period ``x[-1] - x[0] + dx``.
    """
    n = len(x)
    rows, cols, vals = [], [], []
    if periodic:
        d = x[1] - x[0]
        if order == 1:
            w = np.array([-0.5, 0.0, 0.5]) / d
        else:
            w = np.array([1.0, -2.0, 1.0]) / d**2
        for i in range(n):
            for k, off in enumerate((-1, 0, 1)):
                if w[k] != 0.0:
                    rows.append(i)
                    cols.append((i + off) % n)
                    vals.append(w[k])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    for i in range(n):
        if 0 < i < n - 1:
            st = [i - 1, i, i + 1]
        else:
            m = min(n, 3 if order == 1 else 4)
            st = list(range(m)) if i == 0 else list(range(n - m, n))
        w = fd_weights(x[i], x[st], order)
        rows += [i] * len(st)
        cols += st
        vals += list(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _kron_axes(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return sp.csr_matrix(out)


def hessian_forms(grid: Grid) -> dict:
    """Sparse matrices mapping flat node values to Hessian components.

    Cartesian grids: keys ``(i, j)`` with ``i <= j`` give Cartesian components.
    Polar grids: keys ``"rr"``, ``"tt"``, ``"rt"`` give the orthonormal polar
    frame components (u_rr, u_r/r + u_tt/r^2, u_rt/r - u_t/r^2); rows of the
    center node hold the Cartesian components (11, 22, 12) instead.
    """
    if "forms" in grid._cache:
        return grid._cache["forms"]
    if grid.kind == "cartesian":
        nd = grid.ndim
        eye = [sp.identity(len(a), format="csr") for a in grid.axes]
        d1 = [axis_operator(a, 1) for a in grid.axes]
        d2 = [axis_operator(a, 2) for a in grid.axes]
        forms = {}
        for i in range(nd):
            for j in range(i, nd):
                mats = list(eye)
                if i == j:
                    mats[i] = d2[i]
                else:
                    mats[i] = d1[i]
                    mats[j] = d1[j]
                forms[(i, j)] = _kron_axes(mats)
    else:
        r, th = grid.axes
        nr, nt = len(r), len(th)
        Ir, It = sp.identity(nr, format="csr"), sp.identity(nt, format="csr")
        D1r, D2r = axis_operator(r, 1), axis_operator(r, 2)
        D1t, D2t = axis_operator(th, 1, periodic=True), axis_operator(th, 2, periodic=True)
        Mrr = sp.kron(D2r, It, format="csr")
        Mr = sp.kron(D1r, It, format="csr")
        Mt = sp.kron(Ir, D1t, format="csr")
        Mtt = sp.kron(Ir, D2t, format="csr")
        Mrt = sp.kron(D1r, D1t, format="csr")
        rr = np.repeat(r, nt)
        inv = np.zeros_like(rr)
        inv[rr > 0] = 1.0 / rr[rr > 0]
        Dinv, Dinv2 = sp.diags(inv), sp.diags(inv**2)
        forms = {
            "rr": Mrr.tolil(),
            "tt": (Dinv @ Mr + Dinv2 @ Mtt).tolil(),
            "rt": (Dinv @ Mrt - Dinv2 @ Mt).tolil(),
        }
        # center rows: Cartesian Hessian from the Fourier modes of ring 1
        r1 = r[1]
        c2, s2 = np.cos(2 * th), np.sin(2 * th)
        ring = nt + np.arange(nt)
        center = np.arange(nt)
        S = {"w": 4.0 / (r1**2 * nt)}
        # H11 + H22 = 4/r1^2 (mean ring - uc);  H11 - H22 = 8/(r1^2 nt) sum u cos2t;  H12 = 4/(r1^2 nt) sum u sin2t
        for key in ("rr", "tt", "rt"):
            forms[key][:nt, :] = 0.0
        for row in range(nt):
            trace_ring = S["w"] * np.ones(nt)
            diff_ring = 8.0 / (r1**2 * nt) * c2
            h12_ring = 4.0 / (r1**2 * nt) * s2
            forms["rr"][row, ring] = 0.5 * (trace_ring + diff_ring)
            forms["tt"][row, ring] = 0.5 * (trace_ring - diff_ring)
            forms["rt"][row, ring] = h12_ring
            forms["rr"][row, center] = -0.5 * S["w"]
            forms["tt"][row, center] = -0.5 * S["w"]
        forms = {k: sp.csr_matrix(v) for k, v in forms.items()}
    grid._cache["forms"] = forms
    return forms


def _polar_to_cartesian(grid, hrr, htt, hrt):
    th = np.broadcast_to(grid.axes[1], grid.shape).ravel()
    c, s = np.cos(th), np.sin(th)
    hxx = c * c * hrr + s * s * htt - 2 * c * s * hrt
    hyy = s * s * hrr + c * c * htt + 2 * c * s * hrt
    hxy = c * s * (hrr - htt) + (c * c - s * s) * hrt
    nt = grid.shape[1]
    # center rows already hold Cartesian components
    hxx[:nt], hyy[:nt], hxy[:nt] = hrr[:nt], htt[:nt], hrt[:nt]
    return hxx, hyy, hxy


def one_sided_mask(grid: Grid) -> np.ndarray:
    """Nodes whose Hessian uses one-sided stencils."""
    m = grid.boundary_mask()
    return m


def hessian_field(u: ScalarField) -> np.ndarray:
    """Cartesian Hessian at every node, shape ``(*grid.shape, n, n)``.

    Outer-layer nodes use one-sided stencils (see ``one_sided_mask``).
    """
    g = u.grid
    forms = hessian_forms(g)
    v = u.flat
    n = g.ndim
    H = np.empty((g.size, n, n))
    if g.kind == "polar":
        hxx, hyy, hxy = _polar_to_cartesian(g, forms["rr"] @ v, forms["tt"] @ v, forms["rt"] @ v)
        H[:, 0, 0], H[:, 1, 1] = hxx, hyy
        H[:, 0, 1] = H[:, 1, 0] = hxy
    else:
        for (i, j), M in forms.items():
            H[:, i, j] = M @ v
            H[:, j, i] = H[:, i, j]
    return H.reshape(*g.shape, n, n)


def _as_index(grid: Grid, node) -> tuple:
    node = tuple(node)
    if len(node) == grid.ndim and all(isinstance(i, (int, np.integer)) for i in node):
        idx = tuple(int(i) for i in node)
        for i, m in zip(idx, grid.shape):
            if not 0 <= i < m:
                raise RangeError(f"node index {idx} outside grid of shape {grid.shape}")
        return idx
    return grid.locate(node)


def hessian_fd(u: ScalarField, p) -> HessianSample:
    """Discrete Hessian at the node ``p`` (an index tuple or the physical point of a node).

    Physical points snap to the nearest node.  Outer-layer nodes use
    one-sided stencils and are flagged with ``one_sided=True``.
    """
    g = u.grid
    idx = _as_index(g, p)
    H = hessian_field(u)[idx]
    H = 0.5 * (H + H.T)
    return HessianSample(point=g.points()[idx].copy(), matrix=H, stencil_width=1,
                         one_sided=bool(one_sided_mask(g)[idx]), index=idx)


def det_hessian(u: ScalarField, node, scheme: Scheme = "standard",
                frames=DEFAULT_FRAMES) -> float:
    """Discrete Monge-Ampere determinant at an interior node.

    ``scheme="standard"`` is the determinant of ``hessian_fd``;
    ``scheme="wide"`` is the monotone wide-stencil value: the minimum over
    lattice frames of the product of positive parts of the two directional
    second differences (uniform, equally spaced 2D grids only).
    """
    g = u.grid
    idx = _as_index(g, node)
    if scheme == "standard":
        if g.boundary_mask()[idx]:
            raise RangeError(f"node {idx} is on the grid edge")
        return float(np.linalg.det(hessian_fd(u, idx).matrix))
    if scheme == "wide":
        P, kidx, _, _ = wide_stencil_det(u, frames)
        if kidx[idx] < 0:
            raise RangeError(f"no wide-stencil frame fits at node {idx}")
        return float(P[idx])
    raise ParameterError(f"unknown scheme {scheme!r}")


def _check_wide_grid(grid: Grid) -> float:
    if grid.kind != "cartesian" or grid.ndim != 2 or not grid.is_uniform:
        raise ParameterError("the wide stencil needs a uniform 2D Cartesian grid")
    hx = grid.axes[0][1] - grid.axes[0][0]
    hy = grid.axes[1][1] - grid.axes[1][0]
    if abs(hx - hy) > 1e-10 * hx:
        raise ParameterError("the wide stencil needs equal spacing in both axes")
    return float(hx)


def frame_array(frames=DEFAULT_FRAMES) -> np.ndarray:
    """Integer array (K, 2, 2): frame k is (v, v_perp)."""
    out = np.empty((len(frames), 2, 2), dtype=np.int64)
    for k, (a, b) in enumerate(frames):
        out[k, 0] = (a, b)
        out[k, 1] = (-b, a)
    return out


def wide_stencil_det(u: ScalarField, frames=DEFAULT_FRAMES):
    """Wide-stencil determinant at every node.

    Returns ``(P, k, d1, d2)``: the minimal product, the chosen frame index
    (-1 where no frame fits), and the two directional second differences of
    the chosen frame.
    """
    h = _check_wide_grid(u.grid)
    F = frame_array(frames)
    return _kernels.wide_stencil(np.ascontiguousarray(u.values), h, F)


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    worst_value: float
    worst_node: tuple | None
    tol: float

    def __bool__(self):
        return self.passed


def discrete_convexity_check(u: ScalarField, tol: float | None = None,
                             directions=DEFAULT_FRAMES[:2]) -> ConvexityReport:
    """Check second differences along stencil directions at interior nodes.

    Cartesian grids test the coordinate axes and (for 2D) the lattice
    diagonals; polar grids test the radial and angular directions (the two
    orthonormal frame entries of the Hessian).  The tolerance defaults to
    ``1e-8 * max|u|``.
    """
    g = u.grid
    v = u.values
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if tol is None:
        tol = 1e-8 * max(scale, 1e-300)
    if g.kind == "polar":
        forms = hessian_forms(g)
        flat = u.flat
        vals = np.minimum(forms["rr"] @ flat, forms["tt"] @ flat).reshape(g.shape)
        # normalize second derivatives to second differences on the local cell
        r = g.axes[0]
        hr = np.empty_like(r)
        hr[1:-1] = np.minimum(np.diff(r)[:-1], np.diff(r)[1:])
        hr[0], hr[-1] = r[1], r[-1] - r[-2]
        vals = vals * (hr**2)[:, None]
        interior = np.ones(g.shape, dtype=bool)
        interior[-1, :] = False
    else:
        dd = []
        for k in range(g.ndim):
            a = g.axes[k]
            x = np.moveaxis(v, k, 0)
            hm = np.diff(a)[:-1]
            hp = np.diff(a)[1:]
            shape = (-1,) + (1,) * (g.ndim - 1)
            # second difference scaled to the symmetric-cell size
            d = (x[2:] - x[1:-1]) / hp.reshape(shape) - (x[1:-1] - x[:-2]) / hm.reshape(shape)
            d = d * np.minimum(hm, hp).reshape(shape)
            full = np.full(x.shape, np.inf)
            full[1:-1] = d
            dd.append(np.moveaxis(full, 0, k))
        if g.ndim == 2 and g.is_uniform:
            full = np.full(v.shape, np.inf)
            full[1:-1, 1:-1] = np.minimum(v[2:, 2:] - 2 * v[1:-1, 1:-1] + v[:-2, :-2],
                                          v[2:, :-2] - 2 * v[1:-1, 1:-1] + v[:-2, 2:])
            dd.append(full)
        vals = np.min(np.stack(dd), axis=0)
        interior = ~g.boundary_mask()
    if u.mask is not None:
        interior &= u.mask
    if not np.any(interior):
        return ConvexityReport(True, np.inf, None, tol)
    masked = np.where(interior, vals, np.inf)
    k = int(np.argmin(masked))
    worst = float(masked.ravel()[k])
    node = tuple(int(i) for i in np.unravel_index(k, g.shape))
    return ConvexityReport(worst >= -tol, worst, node, tol)


# ---------------------------------------------------------------------------
# persistence


def save_field(u: ScalarField, stem, role: str | None = None, alpha: float | None = None) -> list:
    """Write ``<stem>.json`` metadata and ``<stem>.field`` little-endian float64 values.

    Returns the list of written paths.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "axes": [a.tolist() for a in u.grid.axes],
        "grid_kind": u.grid.kind,
        "shape": list(u.grid.shape),
        "alpha": alpha if alpha is not None else u.alpha,
        "role": role if role is not None else u.role,
        "dtype": "<f8",
        "order": "C",
        "data": stem.name + ".field",
    }
    if u.mask is not None:
        meta["mask"] = np.flatnonzero(~u.mask.ravel()).tolist()
    jpath = stem.with_suffix(".json")
    bpath = stem.with_suffix(".field")
    jpath.write_text(json.dumps(meta, sort_keys=True, indent=1))
    bpath.write_bytes(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    return [jpath, bpath]


def load_field(path) -> ScalarField:
    """Read a snapshot written by ``save_field`` (either the .json or .field path)."""
    path = Path(path)
    jpath = path.with_suffix(".json")
    meta = json.loads(jpath.read_text())
    grid = Grid(tuple(np.asarray(a) for a in meta["axes"]), kind=meta.get("grid_kind", "cartesian"))
    vals = np.frombuffer((jpath.parent / meta["data"]).read_bytes(), dtype="<f8")
    mask = None
    if "mask" in meta:
        mask = np.ones(grid.size, dtype=bool)
        mask[np.asarray(meta["mask"], dtype=int)] = False
    return ScalarField(grid, vals.reshape(grid.shape), mask=mask, role=meta.get("role", ""),
                       alpha=meta.get("alpha"))


def export_csv_slice(u: ScalarField, path, axis: int = -1, index: int = 0) -> Path:
    """Write a 2D field (or one 2D slice of a 3D field) as ``x,y,value`` rows."""
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = u.grid.points()
    vals = u.values
    if u.grid.ndim == 3:
        ax = axis % 3
        keep = [i for i in range(3) if i != ax]
        pts = np.take(pts, index, axis=ax)[..., keep]
        vals = np.take(vals, index, axis=ax)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for p, val in zip(pts.reshape(-1, pts.shape[-1]), vals.ravel()):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(val))])
    return path
