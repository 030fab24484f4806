"""Hodograph reduction to the half-plane and the partial Legendre transform (2D).

Hodograph: near a boundary point the graph ``x_3 = u(x)`` of a function
with ``u = 0`` on the boundary and ``u_n < 0`` is rotated by
``y_1 = x_1, y_2 = -x_3, y_3 = x_2`` (local chart coordinates, ``x_2``
along the inward normal) and re-read as a graph ``y_3 = tu(y)`` over the
half-plane ``y_2 >= 0``.

Partial Legendre transform: on each ``x_n`` slice,
``u*(y', x_n) = max_{x'} (x'.y' - u(x', x_n))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import _kernels
from .errors import ConvexityError, ParameterError, RangeError, TransformError
from .fields import Grid, ScalarField, hessian_field
from .geometry import ConvexDomain

# ---------------------------------------------------------------------------
# derivatives


def gradient_field(u: ScalarField) -> np.ndarray:
    """Second-order finite-difference gradient, shape ``(*grid.shape, n)``.

    Cartesian grids use ``np.gradient`` on the (possibly graded) axes.  On
    polar grids the radial/angular derivatives are converted; the center
    takes the first angular Fourier mode of ring 1.
    """
    g = u.grid
    v = u.values
    if g.kind == "cartesian":
        parts = np.gradient(v, *g.axes, edge_order=2)
        if g.ndim == 1:
            parts = [parts]
        return np.stack(parts, axis=-1)
    r, th = g.axes
    dth = th[1] - th[0]
    ur = np.gradient(v, r, axis=0, edge_order=2)
    ut = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * dth)
    c, s = np.cos(th)[None, :], np.sin(th)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_r = np.where(r[:, None] > 0, 1.0 / np.where(r[:, None] > 0, r[:, None], 1.0), 0.0)
    gx = c * ur - s * ut * inv_r
    gy = s * ur + c * ut * inv_r
    ring = v[1] - v[0, 0]
    nt = len(th)
    gx[0] = 2.0 / (nt * r[1]) * np.sum(ring * np.cos(th))
    gy[0] = 2.0 / (nt * r[1]) * np.sum(ring * np.sin(th))
    return np.stack([gx, gy], axis=-1)


def gauss_curvature(u: ScalarField, points=None) -> np.ndarray:
    """``det D^2 u / (1 + |Du|^2)^{(n+2)/2}`` at nodes (``points=None``) or interpolated."""
    G = gradient_field(u)
    H = hessian_field(u)
    n = u.grid.ndim
    K = np.linalg.det(H) / (1.0 + np.sum(G**2, axis=-1)) ** ((n + 2) / 2.0)
    if points is None:
        return K
    return u.with_values(K, mask=None).interpolate(points, method="cubic")


def rotate_graph(points) -> np.ndarray:
    """Rotation ``(x_1, x_2, x_3) -> (x_1, -x_3, x_2)`` of graph points (last axis of length 3)."""
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != 3:
        raise ParameterError("graph points are 3-vectors")
    return np.stack([p[..., 0], -p[..., 2], p[..., 1]], axis=-1)


# ---------------------------------------------------------------------------
# hodograph


@dataclass
class Hodograph:
    """``tu`` on the half-box together with the local frame it was built in."""

    field: ScalarField
    origin: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    boundary: object

    def to_physical(self, y1, x2) -> np.ndarray:
        """Physical point of local coordinates ``(x_1, x_2) = (y_1, x_2)``."""
        return self.origin + np.multiply.outer(y1, self.tangent) + np.multiply.outer(x2, self.normal)


def hodograph(u: ScalarField, z, domain: ConvexDomain | None = None, normal=None,
              half_width: float = 0.3, height: float = 0.3, shape=(65, 65),
              depth: float | None = None, oversample: int = 8) -> Hodograph:
    """Hodograph transform of ``u`` near the boundary point ``z`` (2D).

    Parameters
    ----------
    u : ScalarField
        Vanishes on the boundary and decreases along the inward normal.
    z : boundary point.
    domain : ConvexDomain, optional
        Supplies the frame and the boundary graph ``x_2 = phi(x_1)``.
        Without it the boundary is the line through ``z`` orthogonal to
        ``normal`` (default ``e_2``).
    half_width, height : float
        Output half-box ``[-half_width, half_width] x [0, height]``.
    shape : (int, int)
        Output node counts.
    depth : float, optional
        Length of the sampled normal segment on each slice (default
        ``3 height``), cut where the segment leaves the grid.
    oversample : int
        Samples per output cell for the slice inversion (monotone cubic).

    Raises
    ------
    TransformError
        A slice is not strictly monotone or does not reach ``height``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (2,) or u.grid.ndim != 2:
        raise ParameterError("hodograph is implemented in 2D")
    if domain is not None:
        chart = domain.local_chart(z)
        nu = np.asarray(chart.normal, dtype=float)
        q = chart.q
    else:
        nu = np.asarray(normal if normal is not None else (0.0, 1.0), dtype=float)
        nu = nu / np.linalg.norm(nu)

        def q(s):
            return np.zeros(np.shape(s)[:-1])
    tan = np.array([nu[1], -nu[0]])
    if domain is not None:
        # keep the chart's tangential orientation
        tan = np.asarray(chart.R[:, 0], dtype=float)
    depth = depth if depth is not None else 3.0 * height
    y1 = np.linspace(-half_width, half_width, shape[0])
    y2 = np.linspace(0.0, height, shape[1])
    phi = np.asarray(q(y1[:, None]), dtype=float).reshape(-1)
    M = oversample * (shape[1] - 1) + 1
    out = np.empty(shape)
    for i, (s, p0) in enumerate(zip(y1, phi)):
        x2 = p0 + np.linspace(0.0, depth, M)
        pts = z + s * tan + np.outer(x2, nu)
        inside = np.array([u.grid.contains(pt) for pt in pts])
        if not inside[0]:
            raise TransformError(f"slice {i} (y1={s:.4g}) starts outside the grid")
        stop = M if inside.all() else int(np.argmin(inside))
        x2, pts = x2[:stop], pts[:stop]
        try:
            vals = -u.interpolate(pts, method="cubic")
        except RangeError as exc:
            raise TransformError(f"slice {i} (y1={s:.4g}) leaves the grid: {exc}") from exc
        vals[0] = 0.0
        if not np.all(np.diff(vals) > 0):
            k = int(np.argmin(np.diff(vals) > 0))
            raise TransformError(f"slice {i} (y1={s:.4g}) is not monotone near x2={x2[k]:.4g}")
        if vals[-1] < height:
            raise TransformError(f"slice {i} (y1={s:.4g}) reaches only {vals[-1]:.4g} < {height}")
        out[i] = PchipInterpolator(vals, x2)(y2)
        out[i, 0] = p0
    grid = Grid((y1, y2))
    fld = ScalarField(grid, out, role="hodograph")
    return Hodograph(fld, z, tan, nu, q)


def hodograph_residual(tu: ScalarField, lam: float = 1.0, n: int = 2) -> ScalarField:
    """Pointwise ``det D^2 tu - lam^n y_n^n tu_n^{n+2}`` (interior nodes; boundary rows masked)."""
    G = gradient_field(tu)
    H = hessian_field(tu)
    yn = tu.grid.coords()[-1]
    R = np.linalg.det(H) - lam**n * yn**n * G[..., -1] ** (n + 2)
    mask = ~tu.grid.boundary_mask()
    return ScalarField(tu.grid, np.where(mask, R, 0.0), mask=mask, role="residual")


# ---------------------------------------------------------------------------
# partial Legendre transform


@dataclass
class LegendrePair:
    """Source ``u`` on the x-grid and ``u*`` on the tensor grid ``(y', x_n)``.

    ``slopes`` holds ``d u / d x_1`` at the source nodes; ``valid`` marks
    the ``u*`` nodes whose ``y_1`` lies inside the slope range of their
    slice and both neighbour slices (elsewhere ``u*`` is the affine
    extension from an end node).
    """

    u: ScalarField
    ustar: ScalarField
    slopes: np.ndarray
    valid: np.ndarray
    mode: str
    eps_conv: float

    @property
    def x_spacing(self) -> float:
        return float(np.max(np.diff(self.u.grid.axes[0])))

    @property
    def y_spacing(self) -> float:
        return float(np.max(np.diff(self.ustar.grid.axes[0])))


def _check_slices(u: ScalarField, eps_conv: float):
    x = u.grid.axes[0]
    v = u.values
    hm = np.diff(x)[:-1]
    hp = np.diff(x)[1:]
    d2 = 2.0 * ((v[2:] - v[1:-1]) / hp[:, None] - (v[1:-1] - v[:-2]) / hm[:, None]) / (hm + hp)[:, None]
    worst = d2.min(axis=0)
    bad = np.flatnonzero(worst < eps_conv)
    if len(bad):
        j = int(bad[0])
        raise ConvexityError(f"slice {j} (x_n={u.grid.axes[1][j]:.4g}) has second difference "
                             f"{worst[j]:.3e} below the convexity floor {eps_conv:.1e}")


def _spline_conjugate(x, f, s, idx):
    """Conjugate of the cubic spline through (x, f) at slopes s; idx from the discrete conjugate."""
    cs = CubicSpline(x, f, bc_type="not-a-knot")
    d1, d2 = cs.derivative(1), cs.derivative(2)
    lo = x[np.maximum(idx - 1, 0)]
    hi = x[np.minimum(idx + 1, len(x) - 1)]
    t = x[idx].astype(float)
    for _ in range(30):
        step = (d1(t) - s) / np.maximum(d2(t), 1e-12)
        t_new = np.clip(t - step, lo, hi)
        if np.max(np.abs(t_new - t)) < 1e-15 * (1.0 + np.max(np.abs(x))):
            t = t_new
            break
        t = t_new
    return t * s - cs(t)


def partial_legendre(u: ScalarField, n_y: int | None = None, mode: str = "spline",
                     eps_conv: float = 1e-8, pad: int = 2) -> LegendrePair:
    """Slice-wise conjugate in ``x_1`` of a 2D Cartesian field.

    Parameters
    ----------
    u : ScalarField
        Strictly convex in ``x_1`` on every ``x_2`` slice.
    n_y : int, optional
        Size of the uniform ``y_1`` grid (default: the ``x_1`` count).  The
        grid spans the global range of ``d u/d x_1`` padded by ``pad`` cells.
    mode : {"spline", "exact"}
        ``exact`` is the discrete conjugate of the node data (lower hull);
        ``spline`` conjugates the cubic spline through the nodes, starting
        from the discrete maximizer.
    eps_conv : float
        Convexity floor for the slice second differences.

    Raises
    ------
    ConvexityError
        A slice violates the convexity floor (the message names it).
    """
    g = u.grid
    if g.kind != "cartesian" or g.ndim != 2:
        raise ParameterError("partial Legendre transform needs a 2D cartesian grid")
    if mode not in ("spline", "exact"):
        raise ParameterError(f"unknown mode {mode!r}")
    _check_slices(u, eps_conv)
    x, xn = g.axes
    slopes = np.gradient(u.values, x, axis=0, edge_order=2)
    lo, hi = float(slopes.min()), float(slopes.max())
    n_y = n_y or len(x)
    dy = (hi - lo) / (n_y - 1 - 2 * pad)
    y = lo - pad * dy + dy * np.arange(n_y)
    ustar = np.empty((n_y, len(xn)))
    for j in range(len(xn)):
        vals, idx = _kernels.conjugate(x, u.values[:, j], y)
        if mode == "spline":
            vals = np.maximum(vals, _spline_conjugate(x, u.values[:, j], y, idx))
        ustar[:, j] = vals
    smin, smax = slopes.min(axis=0), slopes.max(axis=0)
    lo_j = np.maximum.reduce([smin, np.r_[smin[1:], smin[-1]], np.r_[smin[0], smin[:-1]]])
    hi_j = np.minimum.reduce([smax, np.r_[smax[1:], smax[-1]], np.r_[smax[0], smax[:-1]]])
    valid = (y[:, None] >= lo_j[None, :] + dy) & (y[:, None] <= hi_j[None, :] - dy)
    star = ScalarField(Grid((y, xn)), ustar, mask=valid, role="legendre")
    return LegendrePair(u, star, slopes, valid, mode, eps_conv)


def legendre_involution_error(pair: LegendrePair, margin: int = 3) -> float:
    """``max |(u*)* - u|`` over source nodes at least ``margin`` cells inside the common region.

    ``u*`` is restricted to each slice's valid range before the second
    transform, so affine extensions do not enter.
    """
    x, xn = pair.u.grid.axes
    y = pair.ustar.grid.axes[0]
    worst = 0.0
    for j in range(len(xn)):
        ok = pair.valid[:, j]
        if np.sum(ok) < 4:
            continue
        yy = y[ok]
        fs = pair.ustar.values[ok, j]
        # slopes of u* are x-values; only x whose slope lies well inside yy are recovered
        inner = (pair.slopes[:, j] >= yy[0] + margin * (y[1] - y[0])) & \
                (pair.slopes[:, j] <= yy[-1] - margin * (y[1] - y[0]))
        inner[:margin] = False
        inner[len(x) - margin:] = False
        if not np.any(inner):
            continue
        xs = x[inner]
        vals, idx = _kernels.conjugate(yy, fs, xs)
        if pair.mode == "spline":
            vals = np.maximum(vals, _spline_conjugate(yy, fs, xs, idx))
        worst = max(worst, float(np.max(np.abs(vals - pair.u.values[inner, j]))))
    return worst


def quadratic_interpolation_bound(pair: LegendrePair) -> float:
    """``h_x^2/8 max|u_11| + h_y^2/8 max|u*_11|``: the piecewise-linear interpolation
    error bound of the two conjugation steps."""
    u = pair.u.values
    x = pair.u.grid.axes[0]
    d2u = np.abs(np.gradient(np.gradient(u, x, axis=0), x, axis=0))
    ys = pair.ustar.values
    y = pair.ustar.grid.axes[0]
    d2s = np.abs(np.diff(ys, 2, axis=0)) / (y[1] - y[0]) ** 2
    d2s = d2s[pair.valid[1:-1]]
    return pair.x_spacing**2 / 8.0 * float(np.max(d2u[2:-2])) + pair.y_spacing**2 / 8.0 * float(np.max(d2s))


def hessian_inverse_check(pair: LegendrePair, points) -> float:
    """Max mismatch ``|D^2_{y'} u*(y) - (D^2_{x'} u(x))^{-1}|`` at ``y' = D_{x'} u(x)``.

    Raises
    ------
    RangeError
        A matched point ``(y', x_n)`` falls outside the valid part of the
        ``u*`` grid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u = pair.u
    H = hessian_field(u)[..., 0, 0]
    slope = u.with_values(pair.slopes, mask=None).interpolate(pts, method="cubic")
    uxx = u.with_values(H, mask=None).interpolate(pts, method="cubic")
    star = pair.ustar
    Hs = hessian_field(star.with_values(star.values, mask=None))[..., 0, 0]
    y = star.grid.axes[0]
    yp = np.column_stack([slope, pts[:, 1]])
    for k, (s, t) in enumerate(yp):
        i = int(np.searchsorted(y, s))
        j = int(np.argmin(np.abs(star.grid.axes[1] - t)))
        if i <= 1 or i >= len(y) - 1 or not pair.valid[min(i, len(y) - 1), j]:
            raise RangeError(f"point {k} maps to y1={s:.4g} outside the valid transform grid")
    ys = star.with_values(Hs, mask=None).interpolate(yp, method="cubic")
    return float(np.max(np.abs(ys - 1.0 / uxx)))


def transformed_pde_residual(pair: LegendrePair, alpha: float = 2.0, power: float | None = None,
                             coefficient: float = 1.0) -> ScalarField:
    """Pointwise ``c y_n^alpha (-u*_n)^p det D^2_{y'} u* + u*_nn`` on interior valid nodes.

    ``p`` defaults to ``n + 2`` (the hodograph equation); ``p = 0`` with
    ``c = 1`` is the conjugate form of ``det D^2 u = x_n^alpha``.  The
    coefficient ``c`` carries ``lambda^n`` when the eigenvalue was not
    scaled to 1.
    """
    star = pair.ustar
    g = star.grid
    n = g.ndim
    p = n + 2 if power is None else power
    y, yn = g.axes
    v = star.values
    D1n = np.gradient(v, yn, axis=1, edge_order=2)
    hy = y[1] - y[0]
    d2y = np.zeros_like(v)
    d2y[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / hy**2
    hm = np.diff(yn)[:-1]
    hp = np.diff(yn)[1:]
    d2n = np.zeros_like(v)
    d2n[:, 1:-1] = 2.0 * ((v[:, 2:] - v[:, 1:-1]) / hp - (v[:, 1:-1] - v[:, :-2]) / hm) / (hm + hp)
    Y = yn[None, :]
    R = coefficient * Y**alpha * np.power(np.maximum(-D1n, 0.0), p) * d2y + d2n
    mask = np.zeros(v.shape, dtype=bool)
    mask[1:-1, 1:-1] = pair.valid[1:-1, 1:-1] & pair.valid[:-2, 1:-1] & pair.valid[2:, 1:-1]
    return ScalarField(g, np.where(mask, R, 0.0), mask=mask, role="residual")
