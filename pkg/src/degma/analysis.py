"""Boundary-expansion fits, the anisotropic distance d_alpha, Hölder seminorm
sampling and convergence orders."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.spatial import cKDTree

from . import _kernels
from .errors import DomainMembershipError, FitError, ParameterError, SamplingError
from .fields import HessianSample, ScalarField
from .geometry import Chart, ConvexDomain

SLOPE_CAP = 1e3


# ---------------------------------------------------------------------------
# exponents


def gamma_from_beta(beta: float, alpha: float) -> float:
    """Hölder exponent in the d_alpha scale matching a Euclidean ``beta``: ``beta (2+alpha)/2``."""
    return beta * (2.0 + alpha) / 2.0


def beta_from_gamma(gamma: float, alpha: float) -> float:
    return 2.0 * gamma / (2.0 + alpha)


def rho_alpha(y, alpha: float) -> np.ndarray:
    """Anisotropic radius ``(|y'|^2 + y_n^{2+alpha})^{1/2}``."""
    y = np.asarray(y, dtype=float)
    return np.sqrt(np.sum(y[..., :-1] ** 2, axis=-1) + np.maximum(y[..., -1], 0.0) ** (2.0 + alpha))


# ---------------------------------------------------------------------------
# the distance d_alpha


def d_alpha(y, z, alpha: float) -> np.ndarray | float:
    """``|y' - z'| + |y_n^{(2+alpha)/2} - z_n^{(2+alpha)/2}|`` (vectorized)."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(y[..., -1] < 0) or np.any(z[..., -1] < 0):
        raise DomainMembershipError("d_alpha needs nonnegative heights")
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    p = (2.0 + alpha) / 2.0
    out = np.linalg.norm(y[..., :-1] - z[..., :-1], axis=-1) + np.abs(y[..., -1] ** p - z[..., -1] ** p)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MetricScan:
    """Empirical constants with ``c_low |y-z|^{(2+alpha)/2} <= d_alpha <= C_high |y-z|``."""

    alpha: float
    c_low: float
    C_high: float
    pairs: int
    seed: int

    def __iter__(self):
        return iter((self.c_low, self.C_high))


def _half_box_pairs(n, region, samples, rng):
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    y = rng.uniform(lo, hi, size=(samples, n))
    z = rng.uniform(lo, hi, size=(samples, n))
    # a third of the pairs are close (all scales down to 1e-6) so both ratios see small distances
    k = samples // 3
    scale = 10.0 ** rng.uniform(-6, 0, size=(k, 1))
    z[:k] = np.clip(y[:k] + scale * rng.normal(size=(k, n)), lo, hi)
    return y, z


def metric_equivalence_scan(alpha: float, region=None, samples: int = 10_000, seed: int = 0,
                            n: int = 2) -> MetricScan:
    """Best constants of the two-sided comparison of d_alpha with Euclidean powers.

    ``region`` is a (lower, upper) box inside the closed unit half-box
    ``[-1, 1]^{n-1} x [0, 1]`` (the default).
    """
    if region is None:
        region = ([-1.0] * (n - 1) + [0.0], [1.0] * n)
    lo, hi = np.asarray(region[0], float), np.asarray(region[1], float)
    if np.any(lo < np.r_[[-1.0] * (n - 1), 0.0] - 1e-12) or np.any(hi > 1.0 + 1e-12):
        raise ParameterError("region must lie in the closed unit half-box")
    rng = np.random.default_rng(seed)
    y, z = _half_box_pairs(n, (lo, hi), samples, rng)
    e = np.linalg.norm(y - z, axis=-1)
    keep = e > 0
    y, z, e = y[keep], z[keep], e[keep]
    d = d_alpha(y, z, alpha)
    p = (2.0 + alpha) / 2.0
    c_low = float(np.min(d / e**p))
    C_high = float(np.max(d / e))
    assert np.all(c_low * e**p <= d * (1 + 1e-12)) and np.all(d <= C_high * e * (1 + 1e-12))
    return MetricScan(alpha, c_low, C_high, int(keep.sum()), seed)


def metric_bounds(alpha: float, n: int = 2) -> tuple:
    """Analytic constants ``(c, C)`` with ``c |y-z|^p <= d_alpha <= C |y-z|`` on the unit half-box.

    Here ``p = (2+alpha)/2``.  The mean value theorem on [0, 1] gives
    ``C = sqrt(1 + p^2)``.  For the lower constant, ``|a^p - b^p| >= |a-b|^p``,
    ``|s| >= |s|^p / D^{p-1}`` with ``D = 2 sqrt(n-1)`` the tangential
    diameter, and ``s^p + t^p >= 2^{1-p} (s+t)^p`` give ``c = (2D)^{1-p}``.
    """
    p = (2.0 + alpha) / 2.0
    D = 2.0 * np.sqrt(n - 1.0)
    return (2.0 * D) ** (1.0 - p), float(np.sqrt(1.0 + p * p))


def quasi_triangle_constant(alpha: float, samples: int = 10_000, seed: int = 0, n: int = 2) -> float:
    """``max d(x,z) / (d(x,y) + d(y,z))`` over random triples in the unit half-box."""
    rng = np.random.default_rng(seed)
    lo = np.r_[[-1.0] * (n - 1), 0.0]
    hi = np.ones(n)
    x, y, z = (rng.uniform(lo, hi, size=(samples, n)) for _ in range(3))
    num = d_alpha(x, z, alpha)
    den = d_alpha(x, y, alpha) + d_alpha(y, z, alpha)
    ok = den > 0
    return float(np.max(num[ok] / den[ok]))


# ---------------------------------------------------------------------------
# Hölder seminorms


@dataclass(frozen=True)
class HolderEstimate:
    gamma: float
    metric: str
    estimate: float
    pairs: int
    seed: int
    alpha: float | None = None
    trend: tuple = ()

    def row(self) -> dict:
        return {"gamma": self.gamma, "metric": self.metric, "estimate": self.estimate,
                "pairs": self.pairs, "seed": self.seed}


def stratified_pairs(X: np.ndarray, budget: int, seed: int, decades: int = 6):
    """Random node pairs, stratified by distance decade.

    Each decade ``[D 10^{-k-1}, D 10^{-k})`` (D the diameter) receives an
    equal share of the budget where such pairs exist, so near pairs are not
    swamped by far ones.  Deterministic for a fixed seed.
    """
    m = len(X)
    if m < 2:
        raise SamplingError("need at least 2 nodes")
    rng = np.random.default_rng(seed)
    diam = float(np.max(np.ptp(X, axis=0))) * np.sqrt(X.shape[1])
    if m * (m - 1) // 2 <= budget:
        I, J = np.triu_indices(m, 1)
        return I, J
    tree = cKDTree(X)
    share = max(1, budget // (decades + 1))
    Is, Js = [], []
    # far pairs: uniform
    I = rng.integers(0, m, share)
    J = rng.integers(0, m, share)
    Is.append(I)
    Js.append(J)
    for k in range(decades):
        r_hi = diam * 10.0 ** (-k)
        r_lo = r_hi / 10.0
        anchors = rng.integers(0, m, share)
        got_i, got_j = [], []
        nbrs = tree.query_ball_point(X[anchors], r_hi)
        for a, nb in zip(anchors, nbrs):
            nb = np.asarray(nb, dtype=np.int64)
            if len(nb) <= 1:
                continue
            dist = np.linalg.norm(X[nb] - X[a], axis=1)
            nb = nb[(dist >= r_lo) & (dist > 0)]
            if len(nb):
                got_i.append(a)
                got_j.append(nb[rng.integers(0, len(nb))])
        if got_i:
            Is.append(np.asarray(got_i))
            Js.append(np.asarray(got_j))
    I = np.concatenate(Is)
    J = np.concatenate(Js)
    keep = I != J
    return I[keep], J[keep]


def holder_seminorm_points(points, values, gamma: float, metric: str = "euclidean",
                           alpha: float | None = None, pairs: int = 20_000, seed: int = 0,
                           pair_index=None) -> HolderEstimate:
    """Max difference quotient of vector ``values`` over sampled point pairs."""
    if not 0 < gamma <= 1:
        raise ParameterError("gamma must lie in (0, 1]")
    X = np.asarray(points, dtype=float)
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if len(X) < 2:
        raise SamplingError("need at least 2 sample points")
    if metric not in ("euclidean", "d_alpha"):
        raise ParameterError(f"unknown metric {metric!r}")
    if metric == "d_alpha":
        if alpha is None:
            raise ParameterError("d_alpha needs alpha")
        if np.any(X[:, -1] < 0):
            raise DomainMembershipError("d_alpha needs nonnegative heights")
    I, J = pair_index if pair_index is not None else stratified_pairs(X, pairs, seed)
    q = _kernels.pair_quotients(X, V, I, J, gamma, alpha or 0.0, 0 if metric == "euclidean" else 1)
    return HolderEstimate(gamma, metric, float(np.max(q)) if len(q) else 0.0, int(len(I)), seed, alpha)


def holder_seminorm(field_or_samples, gamma: float, metric: str = "euclidean",
                    alpha: float | None = None, pairs: int = 20_000, seed: int = 0) -> HolderEstimate:
    """Sampled Hölder seminorm of a ScalarField or of a list of HessianSamples.

    The estimate is a lower bound for the true seminorm (finite sample of a
    supremum).  For Hessian samples the Frobenius norm of the difference is
    used.
    """
    if isinstance(field_or_samples, ScalarField):
        u = field_or_samples
        X = u.grid.points().reshape(-1, u.grid.ndim)
        V = u.values.ravel()
        if u.mask is not None:
            X, V = X[u.mask.ravel()], V[u.mask.ravel()]
        if u.grid.kind == "polar":
            # drop the replicated center copies
            nt = u.grid.shape[1]
            keep = np.ones(len(X), dtype=bool)
            keep[1:nt] = False
            X, V = X[keep], V[keep]
    else:
        samples = list(field_or_samples)
        if samples and isinstance(samples[0], HessianSample):
            X = np.array([s.point for s in samples])
            V = np.array([s.matrix.ravel() for s in samples])
        else:
            X, V = samples
    return holder_seminorm_points(X, V, gamma, metric, alpha, pairs, seed)


# ---------------------------------------------------------------------------
# convergence orders


@dataclass(frozen=True)
class ConvergenceOrder:
    slope: float
    monotone: bool
    levels: int

    def __float__(self):
        return float(self.slope)


def convergence_order(errors) -> ConvergenceOrder:
    """Least-squares slope of log(err) against log(h) over at least 3 levels.

    Exact zero errors give ``inf``; non-monotone error sequences are flagged
    (``monotone=False``) and a RuntimeWarning is issued.
    """
    data = sorted(((float(h), float(e)) for h, e in errors), key=lambda t: -t[0])
    if len(data) < 3:
        raise ParameterError("need at least 3 grid levels")
    h = np.array([d[0] for d in data])
    e = np.array([d[1] for d in data])
    monotone = bool(np.all(np.diff(e) <= 0))
    if not monotone:
        warnings.warn("errors do not decrease monotonically under refinement", RuntimeWarning)
    if np.any(e <= 0):
        return ConvergenceOrder(float("inf"), monotone, len(data))
    slope = np.polyfit(np.log(h), np.log(e), 1)[0]
    return ConvergenceOrder(float(slope), monotone, len(data))


def local_slopes(r, err) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    err = np.asarray(err, dtype=float)
    return np.diff(np.log(err)) / np.diff(np.log(r))


# ---------------------------------------------------------------------------
# boundary expansions


@dataclass
class ExpansionFit:
    """Fit of ``u(y) ~ Q0(x') + b x_n + a x_n^{2+alpha}/((1+alpha)(2+alpha))`` with ``x = A_tau y``.

    ``Q0(x') = x'.M x'/2 + grad.x' + const``; ``M`` is the tangential Hessian
    ``D^2_{x'}u`` at the boundary point.  ``tau`` is the sliding with
    ``u ~ P(y' + tau y_n, y_n)``, so ``A = A_{-tau}`` brings u to the normal
    form ``u(A x) = P(x)``.
    """

    z: np.ndarray
    alpha: float
    M: np.ndarray
    grad: np.ndarray
    const: float
    b: float
    a: float
    tau: np.ndarray
    slope: float
    slope_interval: tuple
    fit_radius: float
    residual: float
    window_errors: list = field(default_factory=list)
    nuisance: dict = field(default_factory=dict)
    nodes: int = 0

    def row(self) -> dict:
        out = {"z": " ".join(f"{c:.12g}" for c in self.z)}
        for i in range(self.M.shape[0]):
            for j in range(i, self.M.shape[0]):
                out[f"Q0_{i + 1}{j + 1}"] = float(self.M[i, j])
        out.update({"a": self.a, "tau": " ".join(f"{t:.12g}" for t in self.tau),
                    "slope": self.slope, "residual": self.residual})
        return out


def _tangential_monomials(xp: np.ndarray, degree: int):
    m = xp.shape[1]
    cols = []
    for combo in combinations_with_replacement(range(m), degree):
        c = np.ones(len(xp))
        for k in combo:
            c = c * xp[:, k]
        cols.append(c)
    return cols


def _design(y, tau, alpha, nuisance):
    x = np.array(y, dtype=float)
    x[:, :-1] = x[:, :-1] + np.outer(x[:, -1], tau)
    xp, xn = x[:, :-1], x[:, -1]
    m = xp.shape[1]
    k = (1.0 + alpha) * (2.0 + alpha)
    cols = [np.ones(len(x))]
    cols += [xp[:, i] for i in range(m)]
    cols += _tangential_monomials(xp, 2)
    cols += [xn, xn ** (2.0 + alpha) / k]
    names = ["const"] + [f"g{i}" for i in range(m)] + [f"q{i}" for i in range(m * (m + 1) // 2)] + ["b", "a"]
    if nuisance:
        extra = {
            "xp3": _tangential_monomials(xp, 3),
            "xp4": _tangential_monomials(xp, 4),
            "xp2_xn": [c * xn for c in _tangential_monomials(xp, 2)],
            "xp2_xn2": [c * xn**2 for c in _tangential_monomials(xp, 2)],
            "xp3_xn": [c * xn for c in _tangential_monomials(xp, 3)],
            "xp_xnp": [xp[:, i] * xn ** (2.0 + alpha) for i in range(m)],
            "xn_p1": [xn ** (3.0 + alpha)],
        }
        for key, cs in extra.items():
            cols += cs
            names += [f"{key}_{i}" for i in range(len(cs))]
    return np.column_stack(cols), names


def _chart_samples(u: ScalarField, chart: Chart, alpha, r_max):
    X = u.grid.points().reshape(-1, u.grid.ndim)
    V = u.values.ravel()
    keep = np.ones(len(X), dtype=bool)
    if u.mask is not None:
        keep &= u.mask.ravel()
    if u.grid.kind == "polar":
        nt = u.grid.shape[1]
        keep[1:nt] = False
    Y = chart.to_chart(X[keep])
    V = V[keep]
    Y[:, -1] = np.where(np.abs(Y[:, -1]) < 1e-13, 0.0, Y[:, -1])
    ok = Y[:, -1] >= 0
    rho = rho_alpha(np.where(ok[:, None], Y, 0.0), alpha)
    sel = ok & (rho <= r_max)
    return Y[sel], V[sel], rho[sel]


def fit_boundary_expansion(u: ScalarField, z, alpha: float, radii=None,
                           domain: ConvexDomain | None = None, nuisance: bool | None = None,
                           fit_radius: float | None = None) -> ExpansionFit:
    """Weighted least-squares fit of the boundary expansion at ``z``.

    Parameters
    ----------
    u : ScalarField
    z : point on the boundary
    alpha : float
        Degeneracy exponent of the expansion.
    radii : sequence of float, optional
        Windows ``rho_alpha <= r`` for the remainder slope; default
        ``2^{-1}, ..., 2^{-4}``.  The fit uses all nodes with
        ``rho_alpha <= fit_radius`` (default ``max(radii)``).
    domain : ConvexDomain, optional
        Supplies the local chart; without it ``u`` is assumed to live in a
        chart already (floor ``{x_n = z_n}``, normal ``e_n``).
    nuisance : bool, optional
        Add higher-order monomials to absorb remainder terms (curved
        boundaries).  Defaults to True when ``domain`` is given.

    Weights are ``rho_alpha^{-2}`` (capped at the smallest nonzero radius).
    The sliding ``tau`` is found by variable projection.
    """
    z = np.asarray(z, dtype=float)
    radii = sorted(radii if radii is not None else [2.0**-k for k in range(1, 5)])
    r_fit = fit_radius if fit_radius is not None else max(radii)
    if domain is not None:
        try:
            chart = domain.local_chart(z)
        except Exception as exc:  # geometry errors carry the reason
            raise FitError(f"chart construction failed at {z.tolist()}: {exc}") from exc
    else:
        chart = Chart(z, np.eye(len(z)), lambda s: np.zeros(np.shape(s)[:-1]))
    if nuisance is None:
        nuisance = domain is not None
    Y, V, rho = _chart_samples(u, chart, alpha, max(r_fit, max(radii)))
    in_fit = rho <= r_fit
    Yf, Vf, rf = Y[in_fit], V[in_fit], rho[in_fit]
    pos = rf[rf > 0]
    if len(pos) == 0:
        raise FitError("no nodes inside the fit radius")
    w = 1.0 / np.maximum(rf, pos.min())
    m = Y.shape[1] - 1

    def project(tau):
        B, names = _design(Yf, tau, alpha, nuisance)
        Bw = B * w[:, None]
        coef, *_ = np.linalg.lstsq(Bw, Vf * w, rcond=None)
        return coef, names, B, Bw

    B0, names0 = _design(Yf, np.zeros(m), alpha, nuisance)
    if np.linalg.matrix_rank(B0 * w[:, None]) < B0.shape[1]:
        raise FitError(f"rank-deficient fit ({len(Yf)} nodes, {B0.shape[1]} unknowns)")

    def resid(tau):
        coef, _, B, Bw = project(tau)
        return Bw @ coef - Vf * w

    tau = np.zeros(m)
    if m:
        sol = least_squares(resid, tau, xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
        tau = sol.x
    coef, names, B, _ = project(tau)
    c = dict(zip(names, coef))
    a = c["a"]
    if not a > 0:
        raise FitError(f"fitted a = {a:.3e} is not positive")
    M = np.zeros((m, m))
    for idx, combo in enumerate(combinations_with_replacement(range(m), 2)):
        i, j = combo
        val = c[f"q{idx}"]
        if i == j:
            M[i, i] = 2.0 * val
        else:
            M[i, j] = M[j, i] = val
    grad = np.array([c[f"g{i}"] for i in range(m)])
    # remainder: u minus the principal part (nuisance terms count as remainder)
    x = np.array(Y)
    x[:, :-1] += np.outer(x[:, -1], tau)
    xp, xn = x[:, :-1], x[:, -1]
    P = (c["const"] + xp @ grad + 0.5 * np.einsum("ki,ij,kj->k", xp, M, xp) + c["b"] * xn
         + a * xn ** (2.0 + alpha) / ((1.0 + alpha) * (2.0 + alpha)))
    R = np.abs(V - P)
    errs = []
    for r in radii:
        sel = rho <= r
        errs.append(float(np.max(R[sel])) if np.any(sel) else np.nan)
    errs_arr = np.asarray(errs)
    scale = max(float(np.max(np.abs(V))), 1e-300)
    good = np.isfinite(errs_arr) & (errs_arr > 1e-12 * scale)
    if np.sum(good) >= 2:
        slope = float(np.polyfit(np.log(np.asarray(radii)[good]), np.log(errs_arr[good]), 1)[0])
        loc = local_slopes(np.asarray(radii)[good], errs_arr[good])
        interval = (float(np.min(loc)), float(np.max(loc)))
    else:
        slope, interval = SLOPE_CAP, (SLOPE_CAP, SLOPE_CAP)
    nuis = {k: float(v) for k, v in c.items() if k not in ("const", "b", "a") and not k.startswith(("g", "q"))}
    res_norm = float(np.max(np.abs(B @ coef - Vf)))
    return ExpansionFit(z, alpha, M, grad, float(c["const"]), float(c["b"]), float(a), tau, slope,
                        interval, float(r_fit), res_norm, errs, nuis, int(len(Yf)))


# ---------------------------------------------------------------------------
# normal exponent


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    coefficients: tuple
    t_max: float
    residual: float


def fit_normal_exponent(t, values, p_range=(1.2, 6.0), extra_terms: int = 1) -> ExponentFit:
    """Fit ``u(t) ~ c_0 t + sum_k c_k t^{p+k-1}`` (k = 1..extra_terms+1) over the exponent p.

    Variable projection: the linear coefficients are eliminated by least
    squares; p is located by a grid scan followed by a bounded refinement,
    so the global minimizer over ``p_range`` is returned.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(values, dtype=float)
    if len(t) < extra_terms + 4:
        raise FitError("too few profile samples")

    def basis(p):
        return np.column_stack([t] + [t ** (p + k) for k in range(extra_terms + 1)])

    def sse(p):
        B = basis(p)
        c, *_ = np.linalg.lstsq(B, u, rcond=None)
        r = B @ c - u
        return float(r @ r)

    grid = np.linspace(p_range[0], p_range[1], int(round((p_range[1] - p_range[0]) / 0.01)) + 1)
    vals = np.array([sse(p) for p in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    p = float(res.x)
    c, *_ = np.linalg.lstsq(basis(p), u, rcond=None)
    return ExponentFit(p, tuple(float(x) for x in c), float(t.max()), float(np.sqrt(res.fun / len(t))))


def normal_profile(u: ScalarField, z, domain: ConvexDomain, t_max: float, samples: int | None = None):
    """Values of ``u`` along the inward normal at ``z``: returns (t, u(z + t nu)).

    On polar grids with ``z`` at a node angle the ring nodes are used
    directly; otherwise the field is interpolated at ``samples`` points.
    """
    z = np.asarray(z, dtype=float)
    chart = domain.local_chart(z)
    nu = chart.normal
    g = u.grid
    if g.kind == "polar":
        th = np.mod(np.arctan2(z[1], z[0]), 2 * np.pi)
        j = int(np.argmin(np.abs(np.angle(np.exp(1j * (g.axes[1] - th))))))
        if abs(np.angle(np.exp(1j * (g.axes[1][j] - th)))) < 1e-12:
            R = g.axes[0][-1]
            t = R - g.axes[0][::-1]
            vals = u.values[::-1, j]
            sel = (t > 0) & (t <= t_max)
            return t[sel], vals[sel]
    n = samples or 200
    t = np.linspace(0, t_max, n + 1)[1:]
    return t, u.interpolate(z + np.outer(t, nu), method="cubic")
