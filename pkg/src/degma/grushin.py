"""Degenerate linear equation ``x_n^alpha a^{ij} v_ij + v_nn = x_n^alpha f`` (i, j < n).

The equation is solved on the upper half ball ``B_1^+`` (masked inside a
half-box grid) or on the half-box itself.  Rows:

* Dirichlet nodes (floor ``x_n = 0``, sphere, or the box faces) carry the data;
* interior nodes whose whole stencil lies in the closed domain carry the
  3-point discretization of the operator (monotone for diagonal ``a``);
* the remaining interior nodes next to the sphere carry linear interpolation
  between their far neighbour and the sphere crossing along the axis with
  the closest crossing.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .analysis import SLOPE_CAP, holder_seminorm_points, local_slopes, rho_alpha
from .errors import FitError, LinearSolveError, ParameterError
from .fields import Grid, ScalarField

INACTIVE, DIRICHLET, PDE, INTERP = 0, 1, 2, 3


def _evaluate(obj, coords, shape, kind):
    """Turn a constant, array or callable(*coords) into an array of ``shape``."""
    if obj is None:
        return None
    if callable(obj):
        out = np.asarray(obj(*coords), dtype=float)
    else:
        out = np.asarray(obj, dtype=float)
    try:
        return np.broadcast_to(out, shape).copy()
    except ValueError as exc:
        raise ParameterError(f"{kind} has shape {out.shape}, expected {shape}") from exc


@dataclass(frozen=True, eq=False)
class GrushinProblem:
    """Data of the degenerate linear Dirichlet problem.

    Parameters
    ----------
    grid : Grid
        Cartesian grid whose last axis is ``x_n`` and starts at 0.  For the
        half ball it must contain ``[-1, 1]^{n-1} x [0, 1]``.
    alpha : float
        Degeneracy exponent, > 0.
    coeffs : None, scalar, (m, m) matrix, array (*shape, m, m) or callable
        The tangential coefficients ``a^{ij}`` (``m = n-1``); None means
        the identity.  A callable receives the node coordinates.
    forcing : None, scalar, array or callable
        ``f``; None means 0.
    phi : scalar or callable
        Boundary data, evaluated at boundary nodes and at sphere crossings.
    shape : {"half_ball", "half_box"}
    ellipticity : (lam, Lam), optional
        Bounds for the eigenvalues of ``a`` at every node; default only
        requires positive definiteness.
    """

    grid: Grid
    alpha: float
    coeffs: object = None
    forcing: object = None
    phi: object = 0.0
    shape: str = "half_ball"
    ellipticity: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        g = self.grid
        if g.kind != "cartesian":
            raise ParameterError("Grushin problems need a cartesian grid")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if g.axes[-1][0] != 0.0:
            raise ParameterError("the last axis must start at x_n = 0")
        if self.shape not in ("half_ball", "half_box"):
            raise ParameterError(f"unknown shape {self.shape!r}")
        if self.shape == "half_ball":
            for ax in g.axes[:-1]:
                if ax[0] > -1.0 + 1e-12 or ax[-1] < 1.0 - 1e-12:
                    raise ParameterError("grid must contain the half ball")
            if g.axes[-1][-1] < 1.0 - 1e-12:
                raise ParameterError("grid must contain the half ball")
        m = g.ndim - 1
        a = self.coeff_values
        eig = np.linalg.eigvalsh(a.reshape(-1, m, m))
        lam, Lam = self.ellipticity if self.ellipticity is not None else (0.0, np.inf)
        bad = (eig[:, 0] <= max(lam, 0.0) - 1e-12) | (eig[:, -1] > Lam + 1e-12)
        if self.ellipticity is None:
            bad = eig[:, 0] <= 0
        if np.any(bad):
            idx = np.unravel_index(int(np.argmax(bad)), g.shape)
            raise ParameterError(f"coefficients not elliptic within bounds at node {tuple(map(int, idx))}")

    @property
    def m(self) -> int:
        return self.grid.ndim - 1

    @property
    def coeff_values(self) -> np.ndarray:
        if "a" not in self._cache:
            m = self.m
            shape = (*self.grid.shape, m, m)
            if self.coeffs is None:
                a = np.broadcast_to(np.eye(m), shape).copy()
            elif np.isscalar(self.coeffs):
                a = np.broadcast_to(float(self.coeffs) * np.eye(m), shape).copy()
            else:
                a = _evaluate(self.coeffs, self.grid.coords(), shape, "coeffs")
            if not np.allclose(a, np.swapaxes(a, -1, -2)):
                raise ParameterError("coefficient matrices must be symmetric")
            self._cache["a"] = a
        return self._cache["a"]

    @property
    def forcing_values(self) -> np.ndarray:
        if "f" not in self._cache:
            f = _evaluate(self.forcing, self.grid.coords(), self.grid.shape, "forcing")
            self._cache["f"] = np.zeros(self.grid.shape) if f is None else f
        return self._cache["f"]

    def phi_at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if callable(self.phi):
            return np.asarray(self.phi(*np.moveaxis(pts, -1, 0)), dtype=float)
        return np.full(pts.shape[:-1], float(self.phi))

    @property
    def node_kind(self) -> np.ndarray:
        if "kind" not in self._cache:
            self._cache["kind"] = _classify(self)
        return self._cache["kind"]


def _classify(p: GrushinProblem) -> np.ndarray:
    g = p.grid
    X = g.points()
    shape = g.shape
    kind = np.zeros(shape, dtype=np.int8)
    if p.shape == "half_box":
        bd = g.boundary_mask()
        kind[bd] = DIRICHLET
        kind[~bd] = PDE
        return kind
    r2 = np.sum(X**2, axis=-1)
    xn = X[..., -1]
    eps = 1e-12
    closed = (r2 <= 1.0 + eps) & (xn >= 0)
    inside = (r2 < 1.0 - eps) & (xn > 0)
    kind[closed & ~inside] = DIRICHLET
    kind[inside] = PDE
    mixed = _has_mixed(p)
    idx = np.argwhere(inside)
    for ax in range(g.ndim):
        for s in (-1, 1):
            nb = idx.copy()
            nb[:, ax] += s
            out = (nb[:, ax] < 0) | (nb[:, ax] >= shape[ax])
            nbc = np.clip(nb, 0, np.array(shape) - 1)
            ok = ~out & closed[tuple(nbc.T)]
            kind[tuple(idx[~ok].T)] = INTERP
    if mixed:
        for i, j in _mixed_pairs(p.m):
            for si in (-1, 1):
                for sj in (-1, 1):
                    nb = idx.copy()
                    nb[:, i] += si
                    nb[:, j] += sj
                    nbc = np.clip(nb, 0, np.array(shape) - 1)
                    ok = np.all(nb == nbc, axis=1) & closed[tuple(nbc.T)]
                    kind[tuple(idx[~ok].T)] = INTERP
    return kind


def _mixed_pairs(m):
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def _has_mixed(p: GrushinProblem) -> bool:
    a = p.coeff_values
    return any(np.any(a[..., i, j] != 0) for i, j in _mixed_pairs(p.m))


@dataclass
class GrushinSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    kind: np.ndarray
    row_scale: np.ndarray


def _crossing(P, ax, s):
    """Distance from P along ``s e_ax`` to the unit sphere."""
    c = P[..., ax] * s
    r2 = np.sum(P**2, axis=-1)
    return -c + np.sqrt(np.maximum(c * c - (r2 - 1.0), 0.0))


def assemble(p: GrushinProblem) -> GrushinSystem:
    """Sparse system over all grid nodes (inactive nodes get identity rows)."""
    g = p.grid
    shape = g.shape
    N = g.size
    kind = p.node_kind
    X = g.points()
    flat = np.arange(N).reshape(shape)
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)

    def put(r, c, v):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.broadcast_to(v, np.shape(r)).ravel())

    # Dirichlet and inactive rows
    dmask = (kind == DIRICHLET) | (kind == INACTIVE)
    di = flat[dmask]
    put(di, di, 1.0)
    rhs[di] = _extension(p, X[dmask])

    # operator rows
    pidx = np.argwhere(kind == PDE)
    pr = flat[tuple(pidx.T)]
    xn = X[tuple(pidx.T)][:, -1]
    w = xn**p.alpha
    a = p.coeff_values[tuple(pidx.T)]
    diag = np.zeros(len(pidx))
    for ax in range(g.ndim):
        x = g.axes[ax]
        i = pidx[:, ax]
        hm = x[i] - x[i - 1]
        hp = x[i + 1] - x[i]
        coef = 1.0 if ax == g.ndim - 1 else w * a[:, ax, ax]
        cm = coef * 2.0 / (hm * (hm + hp))
        cp = coef * 2.0 / (hp * (hm + hp))
        for s, c in ((-1, cm), (1, cp)):
            nb = pidx.copy()
            nb[:, ax] += s
            put(pr, flat[tuple(nb.T)], c)
        diag -= cm + cp
    for i_ax, j_ax in _mixed_pairs(p.m):
        xi, xj = g.axes[i_ax], g.axes[j_ax]
        ii, jj = pidx[:, i_ax], pidx[:, j_ax]
        den = (xi[ii + 1] - xi[ii - 1]) * (xj[jj + 1] - xj[jj - 1])
        c = 2.0 * w * a[:, i_ax, j_ax] / den
        if not np.any(c):
            continue
        for si in (-1, 1):
            for sj in (-1, 1):
                nb = pidx.copy()
                nb[:, i_ax] += si
                nb[:, j_ax] += sj
                put(pr, flat[tuple(nb.T)], si * sj * c)
    put(pr, pr, diag)
    rhs[pr] = w * p.forcing_values[tuple(pidx.T)]

    # interpolation rows next to the sphere
    for node in np.argwhere(kind == INTERP):
        r = flat[tuple(node)]
        P = X[tuple(node)]
        best = None
        for ax in range(g.ndim):
            x = g.axes[ax]
            for s in (-1, 1):
                nb = node.copy()
                nb[ax] += s
                if 0 <= nb[ax] < shape[ax] and kind[tuple(nb)] != INACTIVE:
                    continue
                d = float(_crossing(P, ax, s))
                if best is None or d < best[0]:
                    best = (d, ax, s)
        d, ax, s = best
        B = P.copy()
        B[ax] += s * d
        opp = node.copy()
        opp[ax] -= s
        put([r], [r], 1.0)
        if 0 <= opp[ax] < shape[ax] and kind[tuple(opp)] != INACTIVE:
            hw = abs(g.axes[ax][opp[ax]] - P[ax])
            put([r], [flat[tuple(opp)]], -d / (hw + d))
            rhs[r] = hw / (hw + d) * p.phi_at(B)
        else:
            d2 = float(_crossing(P, ax, -s))
            B2 = P.copy()
            B2[ax] -= s * d2
            rhs[r] = (d2 * p.phi_at(B) + d * p.phi_at(B2)) / (d + d2)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    scale = np.asarray(abs(A).sum(axis=1)).ravel()
    return GrushinSystem(A, rhs, kind, scale)


def _extension(p: GrushinProblem, pts):
    """Boundary data at boundary nodes; inactive nodes get phi where it is finite, else 0."""
    with np.errstate(all="ignore"):
        v = p.phi_at(pts)
    return np.where(np.isfinite(v), v, 0.0)


@dataclass
class GrushinSolution:
    field: ScalarField
    residual: float
    wall_time: float
    trace: list


def solve_grushin(problem: GrushinProblem, tol: float = 1e-9, linear_solver: str = "direct",
                  report: bool = False):
    """Solve the discrete Dirichlet problem.

    ``tol`` bounds the row-scaled residual ``max |A v - b| / sum_j |A_ij|``.
    Returns a ScalarField (mask = closed domain) or, with ``report=True``,
    a GrushinSolution.

    Raises
    ------
    LinearSolveError
        The factorization fails or the residual stays above ``tol`` after
        one step of iterative refinement; ``trace`` holds the residuals.
    """
    t0 = time.perf_counter()
    sysm = assemble(problem)
    A = sp.csc_matrix(sysm.matrix)
    trace = []
    if linear_solver == "direct":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            trace.append({"stage": "splu", "shape": list(A.shape), "nnz": int(A.nnz), "error": str(exc)})
            raise LinearSolveError(f"sparse LU failed: {exc}", trace) from exc
        solve = lu.solve
    elif linear_solver == "gmres":
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)

        def solve(b):
            hist = []
            x, info = spla.gmres(A, b, M=M, rtol=1e-12, atol=0.0, restart=200, maxiter=50,
                                 callback=lambda r: hist.append(float(r)), callback_type="pr_norm")
            trace.append(hist)
            if info != 0:
                raise LinearSolveError(f"GMRES did not converge (info={info})", trace)
            return x
    else:
        raise ParameterError(f"unknown linear solver {linear_solver!r}")
    v = solve(sysm.rhs)
    res = _scaled_residual(sysm, v)
    trace.append(res)
    if res > tol:
        v = v - solve(sysm.matrix @ v - sysm.rhs)
        res = _scaled_residual(sysm, v)
        trace.append(res)
    if not res <= tol:
        raise LinearSolveError(f"residual {res:.3e} above tol {tol:.1e}", trace)
    mask = sysm.kind != INACTIVE
    fld = ScalarField(problem.grid, v.reshape(problem.grid.shape), mask=mask, role="grushin",
                      alpha=problem.alpha)
    if report:
        return GrushinSolution(fld, res, time.perf_counter() - t0, trace)
    return fld


def _scaled_residual(sysm, v):
    r = sysm.matrix @ v - sysm.rhs
    return float(np.max(np.abs(r) / np.maximum(sysm.row_scale, 1e-300) / max(1.0, np.max(np.abs(v)))))


def grushin_residual(problem: GrushinProblem, values) -> float:
    """Max-norm of the operator-row residual ``L_h v - x_n^alpha f`` for given node values."""
    sysm = assemble(problem)
    v = np.asarray(values, dtype=float).ravel()
    r = sysm.matrix @ v - sysm.rhs
    return float(np.max(np.abs(r[(sysm.kind == PDE).ravel()])))


def rescale_problem(problem: GrushinProblem, h: float, w) -> GrushinProblem:
    """Problem solved by ``w_h(y) = w(F_h y) / h`` on the same grid.

    ``F_h = diag(h^{1/2}, ..., h^{1/(2+alpha)})``.  Coefficients and forcing
    are composed with ``F_h``; the data are ``w_h`` itself.  ``w`` is a
    callable of the coordinates; coefficients and forcing must be callables
    or constants.
    """
    if not 0 < h <= 1:
        raise ParameterError("h must lie in (0, 1]")
    al = problem.alpha
    n = problem.grid.ndim
    scale = np.array([h**0.5] * (n - 1) + [h ** (1.0 / (2.0 + al))])

    def comp(fn):
        if fn is None or np.isscalar(fn):
            return fn
        if not callable(fn):
            raise ParameterError("rescaling needs callable or constant data")
        return lambda *c: fn(*(ci * si for ci, si in zip(c, scale)))

    wh = lambda *c: w(*(ci * si for ci, si in zip(c, scale))) / h  # noqa: E731
    return GrushinProblem(problem.grid, al, comp(problem.coeffs), comp(problem.forcing), wh,
                          problem.shape, problem.ellipticity)


def normal_growth_constant(w: ScalarField, radius: float = 0.5) -> float:
    """``max |w| / x_n`` over active nodes of ``B_radius^+`` with ``x_n > 0``."""
    X = w.grid.points()
    sel = (np.sum(X**2, axis=-1) <= radius**2) & (X[..., -1] > 0)
    if w.mask is not None:
        sel &= w.mask
    return float(np.max(np.abs(w.values[sel]) / X[..., -1][sel]))


# ---------------------------------------------------------------------------
# tangent profile


@dataclass
class LinearProfileFit:
    """``w ~ (a0 + a'.x') x_n`` near the origin."""

    a0: float
    a_prime: np.ndarray
    slope: float
    slope_interval: tuple
    fit_radius: float
    residual: float
    window_errors: list
    forcing_coefficient: float = 0.0
    nodes: int = 0

    def row(self) -> dict:
        out = {"a0": self.a0}
        for i, v in enumerate(self.a_prime, 1):
            out[f"a_{i}"] = float(v)
        out.update({"slope": self.slope, "radius": self.fit_radius})
        return out


def _profile_design(X, alpha, forcing_column):
    xp, xn = X[:, :-1], X[:, -1]
    cols = [xn] + [xp[:, i] * xn for i in range(xp.shape[1])]
    if forcing_column:
        cols.append(xn ** (2.0 + alpha) / ((1.0 + alpha) * (2.0 + alpha)))
    return np.column_stack(cols)


def _weighted_fit(X, V, rho, alpha, forcing_column):
    B = _profile_design(X, alpha, forcing_column)
    pos = rho[rho > 0]
    w = 1.0 / np.maximum(rho, pos.min() if len(pos) else 1.0)
    if np.linalg.matrix_rank(B * w[:, None]) < B.shape[1]:
        raise FitError(f"rank-deficient profile fit ({len(X)} nodes)")
    c, *_ = np.linalg.lstsq(B * w[:, None], V * w, rcond=None)
    m = X.shape[1] - 1
    tangent = X[:, -1] * (c[0] + X[:, :-1] @ c[1:1 + m])
    return c, tangent


def fit_tangent_profile(w: ScalarField, alpha: float, fit_radius: float = 0.5, windows: int = 4,
                        floor_tol: float = 1e-7, bound: float | None = None,
                        forcing_column: bool = True) -> LinearProfileFit:
    """Fit ``(a0 + a'.x') x_n`` to ``w`` over ``rho_alpha <= fit_radius``.

    Weights are ``rho_alpha^{-2}``.  With ``forcing_column`` the term
    ``x_n^{2+alpha}/((1+alpha)(2+alpha))`` is fitted alongside and counts as
    remainder.  The remainder slope is the log-log slope of
    ``E(r) = max |w - (a0 + a'.x') x_n|`` over ``rho_alpha <= r`` for
    ``r = fit_radius 2^{-k}``, ``k < windows``, each window refitted.

    Raises
    ------
    ParameterError
        ``|w| > floor_tol`` somewhere on the floor inside the fit radius.
    FitError
        Rank deficiency, or coefficients above ``bound``.
    """
    g = w.grid
    X = g.points().reshape(-1, g.ndim)
    V = w.values.ravel()
    keep = X[:, -1] >= 0
    if w.mask is not None:
        keep &= w.mask.ravel()
    X, V = X[keep], V[keep]
    rho = rho_alpha(X, alpha)
    near = rho <= fit_radius
    floor = near & (X[:, -1] == 0)
    if np.any(floor) and np.max(np.abs(V[floor])) > floor_tol:
        raise ParameterError(f"w is not zero on the floor (max {np.max(np.abs(V[floor])):.2e})")
    c, tangent = _weighted_fit(X[near], V[near], rho[near], alpha, forcing_column)
    m = g.ndim - 1
    a0, ap = float(c[0]), np.asarray(c[1:1 + m], dtype=float)
    if bound is not None and (abs(a0) > bound or np.any(np.abs(ap) > bound)):
        raise FitError(f"tangent coefficients exceed the bound {bound}")
    radii = [fit_radius * 2.0**-k for k in range(windows)][::-1]
    errs = []
    for r in radii:
        sel = rho <= r
        if np.sum(sel) < 2 * (m + 2):
            errs.append(np.nan)
            continue
        try:
            _, t = _weighted_fit(X[sel], V[sel], rho[sel], alpha, forcing_column)
        except FitError:
            errs.append(np.nan)
            continue
        errs.append(float(np.max(np.abs(V[sel] - t))))
    errs_a = np.asarray(errs)
    scale = max(float(np.max(np.abs(V[near]))), 1e-300)
    good = np.isfinite(errs_a) & (errs_a > 1e-11 * scale)
    if np.sum(good) >= 2:
        rr = np.asarray(radii)[good]
        slope = float(np.polyfit(np.log(rr), np.log(errs_a[good]), 1)[0])
        loc = local_slopes(rr, errs_a[good])
        interval = (float(np.min(loc)), float(np.max(loc)))
    else:
        slope, interval = SLOPE_CAP, (SLOPE_CAP, SLOPE_CAP)
    return LinearProfileFit(a0, ap, slope, interval, float(fit_radius),
                            float(np.max(np.abs(V[near] - tangent))), errs,
                            float(c[-1]) if forcing_column else 0.0, int(np.sum(near)))


# ---------------------------------------------------------------------------
# tangent polynomial at a floor point


@dataclass
class TangentPolynomial:
    """``P0 = q(x') + (a0 + a'.x') x_n + b0 x_n^{2+alpha}/((1+alpha)(2+alpha))`` around ``x0``."""

    x0: np.ndarray
    q_hessian: np.ndarray
    q_gradient: np.ndarray
    q_constant: float
    a0: float
    a_prime: np.ndarray
    b0: float
    compatibility: float
    fit_residual: float
    flagged: bool
    coefficient_seminorm: float | None = None
    forcing_seminorm: float | None = None
    alpha: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = x[..., :-1] - self.x0[:-1]
        xn = x[..., -1]
        q = self.q_constant + y @ self.q_gradient + 0.5 * np.einsum("...i,ij,...j->...", y, self.q_hessian, y)
        k = (1.0 + self.alpha) * (2.0 + self.alpha)
        return q + (self.a0 + y @ self.a_prime) * xn + self.b0 * xn ** (2.0 + self.alpha) / k


def schauder_probe(problem: GrushinProblem, x0, solution: ScalarField | None = None,
                   radii=None, seminorm_gamma: float | None = None, seed: int = 0,
                   nuisance: bool = True, balanced: bool = False,
                   nuisance_degree: float = 6.0, compat_tol: float = 1e-3) -> TangentPolynomial:
    """Fit the tangent polynomial at the floor point ``x0`` and check compatibility.

    The fit stacks the nodes of the dyadic neighbourhoods ``rho_alpha(x - x0)
    <= 2^{-k}`` (k = 2..6 by default) with weights ``rho_alpha^{-2}``.  The
    compatibility residual is ``a^{ij}(x0) q_ij + b0 - f(x0)``; it is
    flagged when it exceeds ``compat_tol`` plus 10 times the fit residual.
    With ``nuisance`` the fit carries the monomials ``y'^beta y_n^e`` beyond
    P0 up to anisotropic degree ``nuisance_degree`` (``|beta| + 2e/(2+alpha)``),
    which keeps the truncation bias of the larger windows out of ``q`` and
    ``b0``; ``balanced`` divides each window's weights by its node count.  With
    ``seminorm_gamma`` the d_alpha Hölder seminorms of ``a`` and ``f`` near
    ``x0`` are estimated and attached.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0[-1] != 0:
        raise ParameterError("probe point must lie on the floor")
    if solution is None:
        solution = solve_grushin(problem)
    al = problem.alpha
    g = problem.grid
    radii = radii if radii is not None else [2.0**-k for k in range(2, 7)]
    X = g.points().reshape(-1, g.ndim)
    V = solution.values.ravel()
    keep = np.ones(len(X), dtype=bool) if solution.mask is None else solution.mask.ravel()
    Y = X[keep] - np.r_[x0[:-1], 0.0]
    V = V[keep]
    rho = rho_alpha(Y, al)
    m = g.ndim - 1
    k = (1.0 + al) * (2.0 + al)

    n_exps = [0.0, 1.0] + [j + 2.0 + al for j in range(int(nuisance_degree))]
    extra = []
    if nuisance:
        # monomials y'^beta y_n^e beyond P0 up to anisotropic degree ``nuisance_degree``
        for e in n_exps:
            for d in range(0, int(nuisance_degree) + 1):
                in_p0 = (e == 0 and d <= 2) or (e == 1 and d <= 1) or (e == 2.0 + al and d == 0)
                if not in_p0 and d + 2.0 * e / (2.0 + al) <= nuisance_degree + 1e-12:
                    extra += [(combo, e) for combo in combinations_with_replacement(range(m), d)]

    def design(Y):
        yp, yn = Y[:, :-1], Y[:, -1]
        cols = [np.ones(len(Y))] + [yp[:, i] for i in range(m)]
        pairs = list(combinations_with_replacement(range(m), 2))
        cols += [yp[:, i] * yp[:, j] for i, j in pairs]
        cols += [yn] + [yp[:, i] * yn for i in range(m)]
        cols += [yn ** (2.0 + al) / k]
        for combo, e in extra:
            c = yn**e
            for i in combo:
                c = c * yp[:, i]
            cols.append(c)
        return np.column_stack(cols), pairs

    rows_B, rows_v = [], []
    pos_min = rho[rho > 0].min()
    for r in radii:
        sel = rho <= r
        if not np.any(sel):
            continue
        B, pairs = design(Y[sel])
        wt = 1.0 / np.maximum(rho[sel], pos_min)
        if balanced:
            wt = wt / np.sqrt(np.sum(sel))
        rows_B.append(B * wt[:, None])
        rows_v.append(V[sel] * wt)
    Bw = np.vstack(rows_B)
    vw = np.concatenate(rows_v)
    if np.linalg.matrix_rank(Bw) < Bw.shape[1]:
        raise FitError("rank-deficient tangent-polynomial fit; refine the grid")
    c, *_ = np.linalg.lstsq(Bw, vw, rcond=None)
    B_all, pairs = design(Y[rho <= max(radii)])
    fit_res = float(np.max(np.abs(B_all @ c - V[rho <= max(radii)])))
    const, grad = c[0], c[1:1 + m]
    H = np.zeros((m, m))
    for idx, (i, j) in enumerate(pairs):
        v = c[1 + m + idx]
        if i == j:
            H[i, i] = 2.0 * v
        else:
            H[i, j] = H[j, i] = v
    off = 1 + m + len(pairs)
    a0, ap, b0 = c[off], c[off + 1:off + 1 + m], c[off + 1 + m]
    a_x0 = _value_at(problem.coeff_values, g, x0)
    f_x0 = _value_at(problem.forcing_values, g, x0)
    comp = float(np.sum(a_x0 * H) + b0 - f_x0)
    semi_a = semi_f = None
    if seminorm_gamma is not None:
        near = (rho <= max(radii))
        pts = X[keep][near]
        av = problem.coeff_values.reshape(-1, m * m)[keep][near]
        fv = problem.forcing_values.ravel()[keep][near]
        semi_a = holder_seminorm_points(pts, av, seminorm_gamma, "d_alpha", al, seed=seed).estimate
        semi_f = holder_seminorm_points(pts, fv, seminorm_gamma, "d_alpha", al, seed=seed).estimate
    return TangentPolynomial(x0, H, np.asarray(grad), float(const), float(a0), np.asarray(ap), float(b0),
                             comp, fit_res, abs(comp) > compat_tol + 10.0 * fit_res, semi_a, semi_f, al)


def _value_at(arr, grid, x0):
    idx = tuple(int(np.argmin(np.abs(ax - c))) for ax, c in zip(grid.axes, x0))
    if not all(abs(ax[i] - c) < 1e-12 for ax, i, c in zip(grid.axes, idx, x0)):
        raise ParameterError("probe point must be a grid node")
    return arr[idx]
