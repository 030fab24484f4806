"""Monge-Ampere eigenvalue problem (det D^2 u)^{1/n} = lambda |u|, u = 0 on the boundary.

Inverse power iteration: given ``u_k`` with ``max|u_k| = 1``, solve
``det D^2 v = |u_k|^n`` with zero data, then ``lambda_{k+1} = 1/max|v|`` and
``u_{k+1} = v / max|v|``.  Each inner solve is the alpha = 0 path of the
Monge-Ampere solver with a right-hand side that vanishes on the boundary
like ``d^n``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NonConvergenceError, ParameterError
from .fields import Grid, ScalarField, hessian_field
from .geometry import ConvexDomain
from .ma_solver import Discretization, MAProblem, solve_dirichlet


@dataclass
class EigenReport:
    """Outcome of ``solve_eigen``.

    ``u`` is normalized with ``max|u| = 1`` and ``u <= 0``.
    """

    lam: float
    u: ScalarField
    domain: ConvexDomain
    residual_history: list
    lam_history: list
    iterations: int
    newton_steps: list = field(default_factory=list)
    wall_time: float = 0.0
    residual_flags: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    def to_json(self) -> dict:
        return {
            "lambda": float(self.lam),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "residual_history": [float(r) for r in self.residual_history],
            "lambda_history": [float(x) for x in self.lam_history],
            "newton_steps": [int(k) for k in self.newton_steps],
            "wall_time": float(self.wall_time),
            "grid_shape": list(self.u.grid.shape),
            "monotone_residual_flags": [int(k) for k in self.residual_flags],
        }


def eigen_residual(u: ScalarField, lam: float, domain: ConvexDomain) -> float:
    """``max |(det_h D^2 u)^{1/n} - lambda |u||`` over equation nodes."""
    prob = MAProblem(domain, u.grid, alpha=0.0, g=1.0, phi=0.0)
    disc = Discretization(prob)
    U = u.values.ravel()
    det = disc.det(U)
    n = 2
    lhs = np.power(np.maximum(det, 0.0), 1.0 / n)
    return float(np.max(np.abs(lhs - lam * np.abs(disc.restrict(U)))))


def solve_eigen(domain: ConvexDomain, grid: Grid, tol: float = 1e-6, max_outer: int = 200,
                inner_tol: float = 1e-11, scheme: str = "standard") -> EigenReport:
    """Inverse power iteration for the Monge-Ampere eigenpair.

    Parameters
    ----------
    domain : ConvexDomain
        2D convex domain (BallDomain with a polar grid, or a polygon/box
        matching a Cartesian grid).
    grid : Grid
    tol : float
        Stop when the eigen-residual is at most ``tol``.
    max_outer : int
    inner_tol : float
        Newton tolerance of each inner solve.

    Raises
    ------
    NonConvergenceError
        Residual still above ``tol`` after ``max_outer`` iterations (or
        stalled for 20 iterations).
    """
    t0 = time.perf_counter()
    if grid.ndim != 2:
        raise ParameterError("eigenvalue computation is 2D")
    n = 2
    base = MAProblem(domain, grid, alpha=0.0, g=1.0, phi=0.0, scheme=scheme)
    rep = solve_dirichlet(base, tol=inner_tol)
    v = rep.solution.values
    vmax = float(np.max(np.abs(v)))
    u = v / vmax
    lam = np.nan
    res_hist, lam_hist, steps, flags = [], [], [rep.iterations], []
    interior = ~grid.boundary_mask()
    for k in range(max_outer):
        g = np.abs(u) ** n
        # boundary entries of g are unused; keep them at zero like the data
        prob = MAProblem(domain, grid, alpha=0.0, g=np.where(interior, g, 0.0), phi=0.0, scheme=scheme)
        guess = u / lam if np.isfinite(lam) else None
        rep = solve_dirichlet(prob, tol=inner_tol, initial=guess)
        steps.append(rep.iterations)
        v = rep.solution.values
        vmax = float(np.max(np.abs(v)))
        lam_new = 1.0 / vmax
        u_new = v * lam_new
        uf = ScalarField(grid, u_new, role="eigenfunction")
        res = eigen_residual(uf, lam_new, domain)
        res_hist.append(res)
        lam_hist.append(lam_new)
        if k >= 3 and len(res_hist) >= 2 and res_hist[-1] > res_hist[-2]:
            flags.append(k)
        u, lam = u_new, lam_new
        if res <= tol:
            break
        if len(res_hist) > 20 and res_hist[-1] > 0.99 * res_hist[-21]:
            raise NonConvergenceError(f"eigen-residual plateau at {res:.3e}",
                                      _report(lam, u, grid, domain, res_hist, lam_hist, steps, t0, flags))
    else:
        raise NonConvergenceError(f"eigen-residual {res_hist[-1]:.3e} above tol after {max_outer} iterations",
                                  _report(lam, u, grid, domain, res_hist, lam_hist, steps, t0, flags))
    return _report(lam, u, grid, domain, res_hist, lam_hist, steps, t0, flags)


def _report(lam, u, grid, domain, res_hist, lam_hist, steps, t0, flags):
    uf = ScalarField(grid, u, role="eigenfunction", alpha=0.0)
    return EigenReport(lam, uf, domain, res_hist, lam_hist, len(res_hist), steps,
                       time.perf_counter() - t0, flags)


def richardson(lam_coarse: float, lam_fine: float, order: float = 2.0) -> float:
    """Two-level extrapolation for grids with spacing ratio 2."""
    f = 2.0**order
    return (f * lam_fine - lam_coarse) / (f - 1.0)


@dataclass
class BoundaryFactor:
    """Samples of ``g = |u| / d`` on the band ``0 < d <= band``."""

    points: np.ndarray
    distance: np.ndarray
    values: np.ndarray
    lipschitz: float
    min_value: float

    def angular_variation(self, depth_tol: float = 1e-12) -> float:
        """Max spread of g over nodes sharing the same distance (disk: rings)."""
        worst = 0.0
        keys = np.round(self.distance / max(depth_tol, 1e-300)).astype(np.int64)
        for key in np.unique(keys):
            sel = keys == key
            if np.sum(sel) > 1:
                worst = max(worst, float(np.ptp(self.values[sel])))
        return worst


def boundary_factor(report: EigenReport, band: float, seed: int = 0,
                    max_pairs: int = 200_000) -> BoundaryFactor:
    """``g = |u|/d`` on nodes with ``0 < d <= band`` plus a sampled Lipschitz seminorm."""
    if not band > 0:
        raise ParameterError("band width must be positive")
    grid = report.u.grid
    pts = grid.points().reshape(-1, 2)
    d = report.domain.distance(pts)
    # rim nodes carry u = 0 and a roundoff-sized distance; keep them out
    sel = (d > 0) & (d <= band) & ~grid.boundary_mask().ravel()
    if grid.kind == "polar":
        # the center row is replicated; keep one copy
        dup = np.zeros(grid.shape, dtype=bool)
        dup[0, 1:] = True
        sel &= ~dup.ravel()
    if not np.any(sel):
        raise ParameterError(f"no nodes with 0 < d <= {band}")
    P = pts[sel]
    dd = d[sel]
    gv = np.abs(report.u.values.ravel()[sel]) / dd
    m = len(P)
    rng = np.random.default_rng(seed)
    if m * (m - 1) // 2 <= max_pairs:
        I, J = np.triu_indices(m, 1)
    else:
        I = rng.integers(0, m, max_pairs)
        J = rng.integers(0, m, max_pairs)
        keep = I != J
        I, J = I[keep], J[keep]
    lip = float(np.max(_kernels.pair_quotients(P, gv, I, J, 1.0))) if len(I) else 0.0
    return BoundaryFactor(P, dd, gv, lip, float(np.min(gv)))


@dataclass
class RegularityProbe:
    beta: float
    estimate: float
    pairs: int
    seed: int


def regularity_probe(report: EigenReport, beta: float, band: tuple = (0.005, 0.25),
                     n_points: int = 400, pairs: int = 20000, seed: int = 0) -> RegularityProbe:
    """Hölder seminorm of the discrete Hessian on near-boundary pairs.

    Hessians are interpolated at ``n_points`` fixed (seeded) physical points
    with boundary distance in ``band``, so estimates from different grids
    compare the same pairs.
    """
    from .analysis import holder_seminorm_points

    if not 0 < beta < 1:
        raise ParameterError("beta must lie in (0, 1)")
    H = hessian_field(report.u)
    grid = report.u.grid
    rng = np.random.default_rng(seed)
    pts = _band_points(report.domain, band, n_points, rng)
    comps = [ScalarField(grid, H[..., i, j]) for (i, j) in ((0, 0), (1, 1), (0, 1))]
    vals = np.column_stack([c.interpolate(pts, method="cubic") for c in comps])
    # Frobenius norm weights the off-diagonal entry twice
    vals[:, 2] *= np.sqrt(2.0)
    est = holder_seminorm_points(pts, vals, beta, pairs=pairs, seed=seed)
    return RegularityProbe(beta, est.estimate, est.pairs, seed)


def _band_points(domain, band, n, rng):
    lo, hi = band
    box = domain.bounding_box()
    out = []
    while len(out) < n:
        p = rng.uniform(box[0], box[1], size=(4 * n, 2))
        inside = domain.contains(p, tol=0.0)
        p = p[inside]
        d = domain.distance(p)
        out.extend(p[(d >= lo) & (d <= hi)])
    return np.asarray(out[:n])
