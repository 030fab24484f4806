"""Damped Newton solver for det D^2 u = g d^alpha with Dirichlet data (2D).

The standard scheme writes the discrete determinant as a quadratic form in
the node values, ``det = (A u)(B u) - (C u)^2``, where A, B, C are sparse
Hessian-component operators (Cartesian: u_11, u_22, u_12; polar: the
orthonormal polar frame).  Its exact derivative is the cofactor-weighted
operator ``(B u) A + (A u) B - 2 (C u) C``.  The wide-stencil scheme takes
the minimum over lattice frames and differentiates the active frame.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConvexificationError, ConvexityError, LinearSolveError,
                     NonConvergenceError, ParameterError)
from .fields import (DEFAULT_FRAMES, Grid, ScalarField, _check_wide_grid,
                     frame_array, hessian_forms, sample, wide_stencil_det)
from .geometry import BallDomain, ConvexDomain

ARMIJO_C = 1e-4
DAMPING_FLOOR = 2.0**-20


@dataclass
class MAProblem:
    """Dirichlet problem ``det D^2 u = g d^alpha`` in ``domain``, ``u = phi`` on the grid boundary.

    ``g`` and ``phi`` may be constants, callables ``f(x1, x2)``, arrays on
    the grid, or ScalarFields.  Polar grids must match a BallDomain centred
    at the origin; Cartesian grids must lie in the closed domain, their
    outer layer carrying the Dirichlet data.
    """

    domain: ConvexDomain
    grid: Grid
    alpha: float = 0.0
    g: object = 1.0
    phi: object = 0.0
    scheme: str = "standard"
    frames: tuple = DEFAULT_FRAMES

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ParameterError("alpha must be nonnegative")
        if self.grid.ndim != 2:
            raise ParameterError("the Monge-Ampere solver is 2D")
        if self.scheme not in ("standard", "wide"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "wide":
            _check_wide_grid(self.grid)
        if self.grid.kind == "polar":
            d = self.domain
            if not (isinstance(d, BallDomain) and np.allclose(d.center, 0.0)
                    and abs(d.radius - self.grid.axes[0][-1]) <= 1e-12 * d.radius):
                raise ParameterError("polar grids need a BallDomain of the same radius centred at 0")
        else:
            if isinstance(self.domain, BallDomain):
                raise ParameterError("disks are discretized on polar grids")
            pts = self.grid.points()
            if not np.all(self.domain.contains(pts, tol=1e-9)):
                raise ParameterError("grid nodes outside the domain")
        g = self.g_values()
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ParameterError("g must be finite and nonnegative")
        interior = ~self.grid.boundary_mask()
        if np.any(g[interior] <= 0):
            raise ParameterError("g must be positive at interior nodes")
        if not np.all(np.isfinite(self.phi_values()[self.grid.boundary_mask()])):
            raise ParameterError("phi is not finite on the boundary")

    def _field_values(self, obj) -> np.ndarray:
        if isinstance(obj, ScalarField):
            if obj.grid.shape != self.grid.shape:
                raise ParameterError("field lives on a different grid")
            return np.array(obj.values)
        if callable(obj):
            return np.array(sample(obj, self.grid).values)
        arr = np.asarray(obj, dtype=float)
        return np.broadcast_to(arr, self.grid.shape).copy()

    def g_values(self) -> np.ndarray:
        return self._field_values(self.g)

    def phi_values(self) -> np.ndarray:
        return self._field_values(self.phi)

    def distance_values(self) -> np.ndarray:
        if "d" not in self.__dict__.setdefault("_cache", {}):
            self._cache["d"] = self.domain.distance(self.grid.points())
        return self._cache["d"]

    def rhs_values(self) -> np.ndarray:
        """``g * d^alpha`` at every node (d evaluated exactly at the node)."""
        d = self.distance_values()
        return self.g_values() * np.power(d, self.alpha)


@dataclass
class SolveReport:
    solution: ScalarField
    residual_history: list
    final_residual: float
    damping_history: list
    wall_time: float
    iterations: int
    converged: bool
    scheme: str = "standard"
    sweeps: int = 0
    roundoff_floor: float = 0.0

    def to_json(self) -> dict:
        return {
            "residual_history": [float(r) for r in self.residual_history],
            "final_residual": float(self.final_residual),
            "damping_history": [float(t) for t in self.damping_history],
            "wall_time": float(self.wall_time),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "scheme": self.scheme,
            "convexifying_sweeps": int(self.sweeps),
            "roundoff_floor": float(self.roundoff_floor),
            "grid_shape": list(self.solution.grid.shape),
        }


class Discretization:
    """Unknown layout and discrete operators of an MAProblem."""

    def __init__(self, problem: MAProblem):
        self.problem = problem
        grid = problem.grid
        self.grid = grid
        N = grid.size
        bmask = grid.boundary_mask().ravel()
        if grid.kind == "polar":
            nt = grid.shape[1]
            # unknown 0 is the center (replicated over row 0); rows are the center and ring nodes
            interior = np.flatnonzero(~bmask)
            ring_nodes = interior[interior >= nt]
            self.eq_nodes = np.concatenate([[0], ring_nodes])
            cols = np.concatenate([np.zeros(nt, dtype=int), 1 + np.arange(len(ring_nodes))])
            rows = np.concatenate([np.arange(nt), ring_nodes])
            self.P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, 1 + len(ring_nodes)))
        else:
            self.eq_nodes = np.flatnonzero(~bmask)
            self.P = sp.csr_matrix((np.ones(len(self.eq_nodes)), (self.eq_nodes, np.arange(len(self.eq_nodes)))),
                                   shape=(N, len(self.eq_nodes)))
        self.n_unknowns = self.P.shape[1]
        self.boundary = np.where(bmask, problem.phi_values().ravel(), 0.0)
        self.rhs = problem.rhs_values().ravel()[self.eq_nodes]
        if problem.scheme == "standard":
            forms = hessian_forms(grid)
            if grid.kind == "polar":
                A, B, C = forms["rr"], forms["tt"], forms["rt"]
            else:
                A, B, C = forms[(0, 0)], forms[(1, 1)], forms[(0, 1)]
            self.A = A[self.eq_nodes]
            self.B = B[self.eq_nodes]
            self.C = C[self.eq_nodes]
            self.AP = sp.csr_matrix(self.A @ self.P)
            self.BP = sp.csr_matrix(self.B @ self.P)
            self.CP = sp.csr_matrix(self.C @ self.P)
        else:
            self.h = _check_wide_grid(grid)
            self.F = frame_array(problem.frames)

    # node vector <-> unknown vector
    def full(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x + self.boundary

    def restrict(self, U: np.ndarray) -> np.ndarray:
        return np.asarray(U).ravel()[self.eq_nodes]

    def components(self, U):
        return self.A @ U, self.B @ U, self.C @ U

    def det(self, U) -> np.ndarray:
        if self.problem.scheme == "standard":
            a, b, c = self.components(U)
            return a * b - c * c
        P, kidx, _, _ = self._wide(U)
        return P.ravel()[self.eq_nodes]

    def _wide(self, U):
        return wide_stencil_det(ScalarField(self.grid, U.reshape(self.grid.shape)), self.problem.frames)

    def jacobian(self, U) -> sp.csr_matrix:
        if self.problem.scheme == "standard":
            a, b, c = self.components(U)
            return sp.csr_matrix(sp.diags(b) @ self.AP + sp.diags(a) @ self.BP - 2.0 * sp.diags(c) @ self.CP)
        return self._wide_jacobian(U)

    def _wide_jacobian(self, U):
        P, kidx, D1, D2 = self._wide(U)
        nx, ny = self.grid.shape
        nodes = self.eq_nodes
        ii, jj = np.unravel_index(nodes, (nx, ny))
        k = kidx.ravel()[nodes]
        d1 = D1.ravel()[nodes]
        d2 = D2.ravel()[nodes]
        scale = max(float(np.max(np.abs(self.rhs))), 1e-300)
        floor = 1e-10 * np.sqrt(scale)
        # derivative of max(d1,0) max(d2,0); the positive parts are floored so rows never vanish
        w1 = np.maximum(d2, floor)
        w2 = np.maximum(d1, floor)
        rows, cols, vals = [], [], []
        for m, w in ((0, w1), (1, w2)):
            a = self.F[k, m, 0]
            b = self.F[k, m, 1]
            s = w / (self.h**2 * (a * a + b * b))
            for (da, db, c) in ((1, 1, 1.0), (0, 0, -2.0), (-1, -1, 1.0)):
                rows.append(np.arange(len(nodes)))
                cols.append(np.ravel_multi_index((ii + da * a, jj + db * b), (nx, ny)))
                vals.append(c * s)
        J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(len(nodes), self.grid.size))
        return sp.csr_matrix(J @ self.P)

    def roundoff_level(self, U) -> float:
        """Max-norm of the rounding noise expected in ``det(U)``.

        Large stencil weights (fine graded cells, the polar center) put a
        floor under the attainable residual; Newton stops there.
        """
        A, B, C = self.standard_forms()
        absU = np.abs(U)
        a, b, c = A @ U, B @ U, C @ U
        scale = (abs(A) @ absU) * np.abs(b) + (abs(B) @ absU) * np.abs(a) + 2.0 * (abs(C) @ absU) * np.abs(c)
        return float(64.0 * np.finfo(float).eps * np.max(scale))

    def standard_forms(self):
        """(A, B, C) rows of the standard scheme, whatever scheme is active."""
        if self.problem.scheme == "standard":
            return self.A, self.B, self.C
        forms = hessian_forms(self.grid)
        return tuple(forms[k][self.eq_nodes] for k in ((0, 0), (1, 1), (0, 1)))

    def convexity_margin(self, U) -> float:
        """Smallest diagonal Hessian entry relative to the largest (>= -tol means convex)."""
        if self.problem.scheme == "standard":
            a, b, _ = self.components(U)
            d = np.minimum(a, b)
            top = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
        else:
            _, kidx, D1, D2 = self._wide(U)
            sel = self.eq_nodes
            d = np.minimum(D1.ravel()[sel], D2.ravel()[sel])
            top = max(float(np.max(np.abs(D1))), float(np.max(np.abs(D2))), 1e-300)
        return float(np.min(d)) / top


def _linear_solve(J, rhs, method: str, trace: list):
    if method == "direct":
        try:
            return spla.splu(sp.csc_matrix(J)).solve(rhs)
        except RuntimeError as exc:
            raise LinearSolveError(f"sparse LU failed: {exc}", trace) from exc
    if method == "gmres":
        ilu = spla.spilu(sp.csc_matrix(J), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(J.shape, ilu.solve)
        hist = []
        x, info = spla.gmres(J, rhs, M=M, rtol=1e-10, atol=0.0, restart=200, maxiter=50,
                             callback=lambda r: hist.append(float(r)), callback_type="pr_norm")
        trace.append(hist)
        if info != 0:
            raise LinearSolveError(f"GMRES did not converge (info={info})", trace)
        return x
    raise ParameterError(f"unknown linear solver {method!r}")


def initial_guess(problem: MAProblem, disc: Discretization | None = None,
                  linear_solver: str = "direct", max_sweeps: int = 300,
                  target: float = 0.1) -> np.ndarray:
    """Convex starting guess for Newton.

    Starts from the Poisson proxy ``Lap u0 = 2 (g d^alpha)^{1/2}`` and then
    runs fixed-point sweeps ``Lap u_{k+1} = (|D^2 u_k|_F^2 + 2 f)^{1/2}``
    (the positive root of ``(Lap u)^2 = |D^2 u|^2 + 2 det D^2 u``) until the
    iterate is discretely convex and its residual dropped by ``target``.
    The Poisson proxy alone is not convex when the data are much more
    convex than ``f`` (e.g. near a degenerate floor).
    """
    disc = disc or Discretization(problem)
    forms = disc.standard_forms()
    L = sp.csr_matrix(forms[0] + forms[1])
    LP = sp.csc_matrix(L @ disc.P)
    if linear_solver == "direct":
        lu = spla.splu(LP)
        solve = lu.solve
    else:
        def solve(b):
            return _linear_solve(LP, b, linear_solver, [])
    lift = L @ disc.boundary
    U = disc.full(solve(2.0 * np.sqrt(disc.rhs) - lift))
    res0 = None
    disc.sweeps = 0
    for k in range(max_sweeps):
        a, b, c = (M @ U for M in forms)
        res = float(np.max(np.abs(a * b - c * c - disc.rhs)))
        res0 = res if res0 is None else res0
        if disc.convexity_margin(U) >= 0.0 and res <= target * res0:
            break
        U = disc.full(solve(np.sqrt(a * a + b * b + 2.0 * c * c + 2.0 * disc.rhs) - lift))
        disc.sweeps = k + 1
    return U


CONVEXITY_TOL = 1e-8


def solve_dirichlet(problem: MAProblem, tol: float = 1e-10, max_iters: int = 50,
                    initial: np.ndarray | ScalarField | None = None,
                    linear_solver: str = "direct", stagnation_window: int = 10) -> SolveReport:
    """Damped Newton iteration for the discrete Monge-Ampere equation.

    Parameters
    ----------
    problem : MAProblem
    tol : float
        Target max-norm of the discrete residual.
    max_iters : int
    initial : array or ScalarField, optional
        Starting guess (its boundary values are replaced by the data);
        defaults to the Poisson proxy.
    linear_solver : {"direct", "gmres"}

    Returns
    -------
    SolveReport

    Raises
    ------
    NonConvergenceError
        Residual reduction below 1 % over ``stagnation_window`` steps, or
        ``max_iters`` reached.
    ConvexificationError
        No damped step keeps the iterate discretely convex.
    """
    t0 = time.perf_counter()
    disc = Discretization(problem)
    if initial is None:
        U = initial_guess(problem, disc, linear_solver)
    else:
        U = initial.values if isinstance(initial, ScalarField) else initial
    x = _polar_unknowns(disc, U)
    U = disc.full(x)
    F = disc.det(U) - disc.rhs
    res = float(np.max(np.abs(F)))
    history, damping, trace = [res], [], []

    def report(converged):
        sol = ScalarField(problem.grid, U.reshape(problem.grid.shape), role="u", alpha=problem.alpha)
        return SolveReport(sol, history, history[-1], damping, time.perf_counter() - t0,
                           len(damping), converged, problem.scheme, getattr(disc, "sweeps", 0),
                           floor_level)

    it = 0
    floor_level = disc.roundoff_level(U)
    while res > max(tol, floor_level):
        if it >= max_iters:
            raise NonConvergenceError(f"no convergence in {max_iters} Newton steps (residual {res:.3e})", report(False))
        J = disc.jacobian(U)
        dx = _linear_solve(J, -F, linear_solver, trace)
        # a nonconvex start (e.g. the Poisson proxy) may not get worse; a convex iterate must stay convex
        floor = min(disc.convexity_margin(U), -CONVEXITY_TOL)
        t = 1.0
        accepted = False
        blocked_by_convexity = True
        while t >= DAMPING_FLOOR:
            x_try = x + t * dx
            U_try = disc.full(x_try)
            F_try = disc.det(U_try) - disc.rhs
            r_try = float(np.max(np.abs(F_try)))
            convex = disc.convexity_margin(U_try) >= floor
            if convex and r_try <= (1.0 - ARMIJO_C * t) * res:
                accepted = True
                break
            if convex:
                blocked_by_convexity = False
            t *= 0.5
        if not accepted:
            if blocked_by_convexity:
                raise ConvexificationError("every damped step loses discrete convexity", report(False))
            raise NonConvergenceError(f"line search failed at residual {res:.3e}", report(False))
        x, U, F, res = x_try, U_try, F_try, r_try
        floor_level = disc.roundoff_level(U)
        history.append(res)
        damping.append(t)
        it += 1
        w = stagnation_window
        if len(history) > w and history[-1] > 0.99 * history[-1 - w] and res > max(tol, floor_level):
            raise NonConvergenceError("Newton stagnation: <1% residual reduction over "
                                      f"{w} steps (residual {res:.3e})", report(False))
    if disc.convexity_margin(U) < -CONVEXITY_TOL:
        raise ConvexificationError("converged iterate is not discretely convex", report(False))
    return report(True)


def _polar_unknowns(disc: Discretization, U: np.ndarray) -> np.ndarray:
    """Unknown vector from node values; the center unknown is the mean of row 0."""
    U = np.asarray(U).ravel()
    nt = disc.grid.shape[1]
    x = np.empty(disc.n_unknowns)
    if disc.grid.kind == "polar":
        x[0] = np.mean(U[:nt])
        x[1:] = U[disc.eq_nodes[1:]]
    else:
        x[:] = U[disc.eq_nodes]
    return x


def residual(u: ScalarField, problem: MAProblem) -> ScalarField:
    """``det_h(u) - g d^alpha`` at equation nodes, zero on boundary nodes."""
    disc = Discretization(problem)
    U = np.asarray(u.values, dtype=float).ravel()
    r = np.zeros(problem.grid.size)
    r[disc.eq_nodes] = disc.det(U) - disc.rhs
    if problem.grid.kind == "polar":
        r[: problem.grid.shape[1]] = r[0]
    return ScalarField(problem.grid, r.reshape(problem.grid.shape), role="residual")


@dataclass
class Linearization:
    """Cofactor-weighted linear operator at ``u``.

    ``matrix`` acts on unknown values (boundary held at zero); ``apply``
    evaluates ``sum cof_ij v_ij`` at equation nodes for any node vector.
    """

    matrix: sp.csr_matrix
    full_matrix: sp.csr_matrix
    eq_nodes: np.ndarray
    grid: Grid

    def apply(self, v: ScalarField) -> ScalarField:
        out = np.zeros(self.grid.size)
        out[self.eq_nodes] = self.full_matrix @ v.values.ravel()
        return ScalarField(self.grid, out.reshape(self.grid.shape), role="Lv")


def linearize_at(u: ScalarField, problem: MAProblem) -> Linearization:
    """Derivative of the discrete determinant at ``u`` (raises ConvexityError if u is not convex)."""
    disc = Discretization(problem)
    U = np.asarray(u.values, dtype=float).ravel()
    if disc.convexity_margin(U) < -CONVEXITY_TOL:
        raise ConvexityError("linearization needs a discretely convex field")
    if problem.scheme == "standard":
        a, b, c = disc.components(U)
        full = sp.csr_matrix(sp.diags(b) @ disc.A + sp.diags(a) @ disc.B - 2.0 * sp.diags(c) @ disc.C)
        J = sp.csr_matrix(full @ disc.P)
    else:
        J = disc._wide_jacobian(U)
        # rebuild the full-node operator from the unknown-space one plus boundary columns
        saved = disc.P
        disc.P = sp.identity(problem.grid.size, format="csr")
        full = disc._wide_jacobian(U)
        disc.P = saved
    return Linearization(J, full, disc.eq_nodes, problem.grid)
