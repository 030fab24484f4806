"""Closed-form barrier functions, their determinant identities and the
determinant lower bound ``det(A + lam I) >= det A + n lam (det A)^{(n-1)/n}``.

Barrier kinds (``k = (1+alpha)(2+alpha)``, ``t = ((x_n - delta0 eps)^+)``,
``kappa = theta0^{1/(2+alpha)}``, ``s = x' + eps a' x_n``):

``upper-step1``  ``|x'|^2/2 + 8 eps |x'-x0'|^2 + (1 - delta0 eps)/(1+16 eps)^{n-1} t^{2+alpha}/k + C eps x_n + 2 delta0 eps``
``lower-step1``  ``|x'|^2/2 - 8 eps |x'-x0'|^2 + (1 + delta0 eps)/(1-16 eps)^{n-1} x_n^{2+alpha}/k - C eps x_n - 2 delta0 eps``
``lower-step3``  ``U0(s, x_n) + eps (-C' kappa |s|^2 + C'' kappa x_n^{2+alpha} + a0 x_n / 2)``
``upper-step3``  ``(1/2 + eps C' kappa)|s|^2 + (1 - C'' eps kappa)/k t^{2+alpha} + eps a0 x_n / 2``
``grushin-wbar`` ``C x_n + 4 |x'-x0'|^2 - 8 n x_n^{2+alpha}``
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError, SpecError
from .fields import ScalarField

KINDS = ("upper-step1", "lower-step1", "lower-step3", "upper-step3", "grushin-wbar")
EPS0_DEFAULT = 0.05


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier kind and parameters.

    ``eps0`` is the smallness threshold recorded in ``regime``; the
    constructions do not fix a value and it is never enforced.
    """

    kind: str
    eps: float = 0.0
    delta0: float = 0.0
    C: float = 10.0
    C1: float = 1.0
    C2: float = 1.0
    theta0: float = 0.1
    x0: tuple = ()
    alpha: float = 1.0
    n: int = 2
    a0: float = 0.0
    a_prime: tuple = ()
    eps0: float = EPS0_DEFAULT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown barrier kind {self.kind!r}; expected one of {KINDS}")
        if self.n not in (2, 3):
            raise SpecError("n must be 2 or 3")
        if not self.alpha > 0:
            raise SpecError("alpha must be positive")
        for name in ("x0", "a_prime"):
            v = getattr(self, name)
            v = tuple(float(c) for c in v) if len(v) else (0.0,) * (self.n - 1)
            if len(v) != self.n - 1:
                raise SpecError(f"{name} must have n-1 = {self.n - 1} entries")
            object.__setattr__(self, name, v)

    @property
    def regime(self) -> dict:
        """Which smallness conditions hold (recorded, not enforced)."""
        return {"eps<=eps0": self.eps <= self.eps0, "delta0<=eps0": self.delta0 <= self.eps0,
                "16eps<1": 16 * self.eps < 1}

    def to_json(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        d["a_prime"] = list(self.a_prime)
        return d


def _split(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n:
        raise ParameterError(f"points must have {spec.n} coordinates")
    if np.any(x[..., -1] < 0):
        raise ParameterError("barriers live on the closed half-space x_n >= 0")
    return x, x[..., :-1], x[..., -1]


def _power_terms(t, p):
    """``t^p, p t^{p-1}, p (p-1) t^{p-2}`` for ``t >= 0`` (zero where t = 0 and the power is positive)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = np.where(t > 0, t**p, 0.0)
        v1 = np.where(t > 0, p * t ** (p - 1), 0.0)
        v2 = np.where(t > 0, p * (p - 1) * t ** (p - 2), 0.0)
    return v0, v1, v2


def eval_barrier(spec: BarrierSpec, x):
    """Value, gradient and Hessian of the barrier at points ``x`` (shape ``(..., n)``)."""
    x, xp, xn = _split(spec, x)
    n, al = spec.n, spec.alpha
    k = (1.0 + al) * (2.0 + al)
    p = 2.0 + al
    lead = x.shape[:-1]
    grad = np.zeros(lead + (n,))
    hess = np.zeros(lead + (n, n))
    eye = np.eye(n - 1)
    x0 = np.asarray(spec.x0)
    eps, d0 = spec.eps, spec.delta0

    if spec.kind in ("upper-step1", "lower-step1"):
        sgn = 1.0 if spec.kind == "upper-step1" else -1.0
        dx = xp - x0
        if sgn > 0:
            c = (1.0 - d0 * eps) / (1.0 + 16.0 * eps) ** (n - 1)
            t = np.maximum(xn - d0 * eps, 0.0)
        else:
            c = (1.0 + d0 * eps) / (1.0 - 16.0 * eps) ** (n - 1)
            t = xn
        t0, t1, t2 = _power_terms(t, p)
        val = (0.5 * np.sum(xp**2, -1) + sgn * 8.0 * eps * np.sum(dx**2, -1) + c * t0 / k
               + sgn * (spec.C * eps * xn + 2.0 * d0 * eps))
        grad[..., :-1] = xp + sgn * 16.0 * eps * dx
        grad[..., -1] = c * t1 / k + sgn * spec.C * eps
        hess[..., :-1, :-1] = (1.0 + sgn * 16.0 * eps) * eye
        hess[..., -1, -1] = c * t2 / k
        return val, grad, hess

    if spec.kind in ("lower-step3", "upper-step3"):
        ap = np.asarray(spec.a_prime)
        kappa = spec.theta0 ** (1.0 / (2.0 + al))
        s = xp + eps * np.multiply.outer(xn, ap)
        if spec.kind == "lower-step3":
            q = 0.5 - eps * spec.C1 * kappa
            cn = 1.0 + eps * spec.C2 * kappa * k
            t = xn
        else:
            q = 0.5 + eps * spec.C1 * kappa
            cn = 1.0 - spec.C2 * eps * kappa
            t = np.maximum(xn - d0 * eps, 0.0)
        t0, t1, t2 = _power_terms(t, p)
        val = q * np.sum(s**2, -1) + cn * t0 / k + 0.5 * eps * spec.a0 * xn
        # chain rule through the sliding s = x' + eps a' x_n
        gs = 2.0 * q * s
        grad[..., :-1] = gs
        grad[..., -1] = eps * np.sum(gs * ap, -1) + cn * t1 / k + 0.5 * eps * spec.a0
        hess[..., :-1, :-1] = 2.0 * q * eye
        hess[..., :-1, -1] = 2.0 * q * eps * ap
        hess[..., -1, :-1] = 2.0 * q * eps * ap
        hess[..., -1, -1] = 2.0 * q * eps**2 * np.dot(ap, ap) + cn * t2 / k
        return val, grad, hess

    # grushin-wbar
    dx = xp - x0
    t0, t1, t2 = _power_terms(xn, p)
    val = spec.C * xn + 4.0 * np.sum(dx**2, -1) - 8.0 * n * t0
    grad[..., :-1] = 8.0 * dx
    grad[..., -1] = spec.C - 8.0 * n * t1
    hess[..., :-1, :-1] = 8.0 * eye
    hess[..., -1, -1] = -8.0 * n * t2
    return val, grad, hess


def claimed_determinant(spec: BarrierSpec, x) -> np.ndarray:
    """Closed-form value of ``det D^2`` the barrier is built to have."""
    x, xp, xn = _split(spec, x)
    n, al = spec.n, spec.alpha
    eps, d0 = spec.eps, spec.delta0
    k = (1.0 + al) * (2.0 + al)
    if spec.kind == "upper-step1":
        return (1.0 - d0 * eps) * np.maximum(xn - d0 * eps, 0.0) ** al
    if spec.kind == "lower-step1":
        return (1.0 + d0 * eps) * xn**al
    kappa = spec.theta0 ** (1.0 / (2.0 + al))
    if spec.kind == "lower-step3":
        return (1.0 - 2.0 * eps * spec.C1 * kappa) ** (n - 1) * (1.0 + eps * spec.C2 * kappa * k) * xn**al
    if spec.kind == "upper-step3":
        return ((1.0 + 2.0 * eps * spec.C1 * kappa) ** (n - 1) * (1.0 - spec.C2 * eps * kappa)
                * np.maximum(xn - d0 * eps, 0.0) ** al)
    raise SpecError("the Grushin barrier has no determinant identity")


def verify_barrier_determinant(spec: BarrierSpec, points) -> float:
    """Max relative discrepancy between ``det`` of the closed-form Hessian and the claimed value.

    The discrepancy is ``|det H - rhs| / max(|rhs|, prod_i |H_i|)`` where
    ``prod_i |H_i|`` (Hadamard's bound, the roundoff scale of ``det``) equals
    ``|det H|`` for the diagonal step-1 Hessians.  Exact zeros on both
    sides count as agreement.
    """
    if spec.kind == "grushin-wbar":
        raise SpecError("determinant identities are defined for the Monge-Ampere barriers")
    _, _, H = eval_barrier(spec, points)
    det = np.linalg.det(H)
    rhs = claimed_determinant(spec, points)
    diff = np.abs(det - rhs)
    hadamard = np.prod(np.linalg.norm(H, axis=-1), axis=-1)
    scale = np.maximum(np.abs(rhs), hadamard)
    rel = np.where(diff == 0, 0.0, diff / np.maximum(scale, np.finfo(float).tiny))
    return float(np.max(rel)) if rel.size else 0.0


def grushin_operator(spec: BarrierSpec, x, coeffs=None) -> np.ndarray:
    """``x_n^alpha a^{ij} w_ij + w_nn`` of the barrier (``a`` defaults to the identity)."""
    x, _, xn = _split(spec, x)
    _, _, H = eval_barrier(spec, x)
    m = spec.n - 1
    a = np.eye(m) if coeffs is None else np.asarray(coeffs, dtype=float)
    tang = np.einsum("...ij,...ij->...", np.broadcast_to(a, H.shape[:-2] + (m, m)), H[..., :m, :m])
    return xn**spec.alpha * tang + H[..., -1, -1]


# ---------------------------------------------------------------------------
# matrix inequality


def matrix_lower_bound_check(A, lam: float) -> float:
    """``det(A + lam I) - det A - n lam (det A)^{(n-1)/n}`` for PSD ``A`` and ``lam >= 0``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("A must be a square matrix")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise ParameterError("A must be symmetric")
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    n = A.shape[0]
    ev = np.linalg.eigvalsh(A)
    scale = max(1.0, float(np.max(np.abs(ev))))
    if ev[0] < -1e-12 * scale:
        raise ParameterError(f"A is not positive semidefinite (min eigenvalue {ev[0]:.3e})")
    ev = np.maximum(ev, 0.0)
    d = float(np.prod(ev))
    return float(np.prod(ev + lam) - d - n * lam * d ** ((n - 1) / n))


def matrix_scale(A, lam: float) -> float:
    """Magnitude used to judge roundoff in ``matrix_lower_bound_check``."""
    ev = np.abs(np.linalg.eigvalsh(np.asarray(A, dtype=float)))
    return float(np.prod(ev + lam)) + 1.0


def random_psd(rng, n: int, count: int, rank_deficient: float = 0.1) -> np.ndarray:
    """Wishart-style samples ``G G^T``; a fraction is made singular."""
    G = rng.normal(size=(count, n, n)) * rng.lognormal(0.0, 1.0, size=(count, 1, 1))
    A = G @ np.swapaxes(G, -1, -2)
    k = int(rank_deficient * count)
    if k:
        G1 = G[:k].copy()
        G1[:, :, -1] = 0.0
        A[:k] = G1 @ np.swapaxes(G1, -1, -2)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


# ---------------------------------------------------------------------------
# domination probe


@dataclass
class DominationReport:
    spec: BarrierSpec
    nodes: int
    floor_points: int
    upper_violations: int
    lower_violations: int
    min_upper_margin: float
    min_lower_margin: float
    floor_margin: float
    measured_C: float
    holds: bool
    violations_at: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "spec"}
        d["spec"] = self.spec.to_json()
        return d


def barrier_domination_probe(u: ScalarField, spec: BarrierSpec, floor_points=None,
                             tol: float = 0.0) -> DominationReport:
    """Check ``lower <= u <= upper`` for the step-1 barriers centered at floor points.

    Nodes are those of ``S_1(U_0)`` (``U_0 < 1``) on the grid; the barrier
    centers default to the floor nodes of ``S_{1/2}(U_0)``.  Also reports
    the smallest ``C`` with ``|v| <= 2 delta0 + C x_n`` on ``S_{1/2}(U_0)``,
    ``v = (u - U_0)/eps``.
    """
    if spec.kind not in ("upper-step1", "lower-step1"):
        raise SpecError("the domination probe uses the step-1 barriers")
    g = u.grid
    if g.kind != "cartesian":
        raise ParameterError("domination probe needs a cartesian grid with floor x_n = 0")
    n, al = spec.n, spec.alpha
    if g.ndim != n:
        raise ParameterError("grid dimension does not match the spec")
    X = g.points().reshape(-1, n)
    V = u.values.ravel()
    if u.mask is not None:
        X, V = X[u.mask.ravel()], V[u.mask.ravel()]
    k = (1.0 + al) * (2.0 + al)
    U0 = 0.5 * np.sum(X[:, :-1] ** 2, -1) + np.maximum(X[:, -1], 0.0) ** (2.0 + al) / k
    sec = U0 < 1.0
    Xs, Vs = X[sec], V[sec]
    if floor_points is None:
        fl = (np.abs(X[:, -1]) < 1e-14) & (U0 < 0.5)
        floor_points = X[fl][:, :-1]
    floor_points = np.atleast_2d(np.asarray(floor_points, dtype=float))
    base = {kk: v for kk, v in asdict(spec).items() if kk not in ("kind", "x0")}
    up_v = lo_v = 0
    min_up = min_lo = np.inf
    floor_margin = np.inf
    where = []
    for x0 in floor_points:
        up = BarrierSpec(kind="upper-step1", x0=tuple(x0), **base)
        lo = BarrierSpec(kind="lower-step1", x0=tuple(x0), **base)
        mu = eval_barrier(up, Xs)[0] - Vs
        ml = Vs - eval_barrier(lo, Xs)[0]
        bad_u = mu < -tol
        bad_l = ml < -tol
        up_v += int(np.sum(bad_u))
        lo_v += int(np.sum(bad_l))
        if np.any(bad_u | bad_l) and len(where) < 20:
            where.append([float(c) for c in Xs[np.argmax(bad_u | bad_l)]])
        min_up = min(min_up, float(mu.min()))
        min_lo = min(min_lo, float(ml.min()))
        on_floor = np.abs(Xs[:, -1]) < 1e-14
        if np.any(on_floor):
            floor_margin = min(floor_margin, float(min(mu[on_floor].min(), ml[on_floor].min())))
    half = (U0 < 0.5) & (X[:, -1] > 0)
    measured_C = float("nan")
    if spec.eps > 0 and np.any(half):
        v = (V[half] - U0[half]) / spec.eps
        measured_C = float(max(0.0, np.max((np.abs(v) - 2.0 * spec.delta0) / X[half, -1])))
    return DominationReport(spec, int(len(Xs)), int(len(floor_points)), up_v, lo_v, min_up, min_lo,
                            floor_margin, measured_C, up_v == 0 and lo_v == 0, where)


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteRow:
    name: str
    kind: str
    params: str
    violation: float
    tolerance: float
    passed: bool

    def row(self) -> dict:
        return asdict(self)


def _halfspace_points(rng, n, count):
    xp = rng.uniform(-1.0, 1.0, size=(count, n - 1))
    xn = rng.uniform(0.0, 1.0, size=(count, 1))
    xn[: count // 10] = 0.0
    xn[count // 10: count // 5] *= 1e-3
    return np.hstack([xp, xn])


def determinant_suite(points: int = 1000, seed: int = 0, tol: float = 1e-12,
                      params=(0.0, 0.05, 0.1, 0.2), alphas=(0.5, 1.0, 2.0), dims=(2, 3)):
    rng = np.random.default_rng(seed)
    rows = []
    for n in dims:
        X = _halfspace_points(rng, n, points)
        for kind in ("upper-step1", "lower-step1", "lower-step3", "upper-step3"):
            for al in alphas:
                for eps in params:
                    for d0 in params:
                        spec = BarrierSpec(kind, eps=eps, delta0=d0, alpha=al, n=n,
                                           x0=tuple(rng.uniform(-0.5, 0.5, n - 1)),
                                           a_prime=tuple(rng.normal(size=n - 1)), a0=float(rng.normal()))
                        viol = verify_barrier_determinant(spec, X)
                        rows.append(SuiteRow("determinant-identity", kind,
                                             f"n={n} alpha={al} eps={eps} delta0={d0}", viol, tol, viol <= tol))
    return rows


def matrix_suite(count: int = 10_000, seed: int = 0, tol: float = 1e-12, dims=(2, 3)):
    rng = np.random.default_rng(seed)
    rows = []
    for n in dims:
        As = random_psd(rng, n, count)
        lams = rng.uniform(0.0, 10.0, size=count)
        lams[: count // 20] = 0.0
        worst = 0.0
        for A, lam in zip(As, lams):
            m = matrix_lower_bound_check(A, lam)
            worst = min(worst, m / matrix_scale(A, lam))
        rows.append(SuiteRow("matrix-lower-bound", "psd", f"n={n} samples={count}", -worst, tol, worst >= -tol))
    return rows


def grushin_barrier_suite(points: int = 1000, seed: int = 0, alphas=(0.5, 1.0, 2.0), dims=(2, 3)):
    rng = np.random.default_rng(seed)
    rows = []
    for n in dims:
        X = _halfspace_points(rng, n, points)
        for al in alphas:
            spec = BarrierSpec("grushin-wbar", alpha=al, n=n, C=16.0 * n)
            Lw = grushin_operator(spec, X)
            worst = float(np.max(Lw))
            rows.append(SuiteRow("grushin-barrier", "grushin-wbar", f"n={n} alpha={al}", max(worst, 0.0),
                                 0.0, worst <= 0.0))
    return rows


def run_suite(name: str = "all", seed: int = 0, points: int = 1000, matrices: int = 10_000):
    """Rows of the pass/fail table for ``determinant``, ``matrix``, ``grushin`` or ``all``."""
    suites = {
        "determinant": lambda: determinant_suite(points, seed),
        "matrix": lambda: matrix_suite(matrices, seed),
        "grushin": lambda: grushin_barrier_suite(points, seed),
    }
    if name == "all":
        return [r for key in ("determinant", "matrix", "grushin") for r in suites[key]()]
    if name not in suites:
        raise SpecError(f"unknown suite {name!r}")
    return suites[name]()
