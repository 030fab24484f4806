"""Convex domains, boundary distance, anisotropic scalings, slidings and sections."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.optimize import brentq, minimize
from scipy.spatial import ConvexHull

from .errors import (DomainMembershipError, ParameterError, RangeError,
                     SamplingError)
from .fields import Grid, ScalarField

_TOL = 1e-10


@dataclass(frozen=True)
class Chart:
    """Local graph chart at a boundary point.

    Chart coordinates ``y = R.T @ (x - origin)``: the last column of ``R`` is
    the inward unit normal, so near ``origin`` the domain is
    ``{y_n > q(y')}`` with ``q(0) = 0`` and ``grad q(0) = 0``.
    """

    origin: np.ndarray
    R: np.ndarray
    q: Callable

    def to_chart(self, X):
        return (np.asarray(X, dtype=float) - self.origin) @ self.R

    def from_chart(self, Y):
        return np.asarray(Y, dtype=float) @ self.R.T + self.origin

    @property
    def normal(self) -> np.ndarray:
        return self.R[:, -1]


class ConvexDomain:
    """Common interface of the domain representations.

    Subclasses implement ``contains`` and ``distance`` (vectorized over
    points of shape ``(..., n)``) and ``local_chart``.
    """

    dimension: int
    kind: str

    def contains(self, p, tol: float = _TOL) -> np.ndarray:
        raise NotImplementedError

    def distance(self, p) -> np.ndarray:
        raise NotImplementedError

    def local_chart(self, z) -> Chart:
        raise NotImplementedError

    def bounding_box(self) -> np.ndarray:
        raise NotImplementedError

    def _check_inside(self, p):
        p = np.asarray(p, dtype=float)
        inside = np.asarray(self.contains(p))
        if not np.all(inside):
            k = int(np.argmin(inside.ravel()))
            bad = p.reshape(-1, p.shape[-1])[k]
            raise DomainMembershipError(f"point {bad.tolist()} is outside the domain")
        return p


def distance_to_boundary(domain: ConvexDomain, p) -> np.ndarray | float:
    """Euclidean distance from ``p`` (inside the closed domain) to the boundary.

    For graph domains the boundary is the floor graph; the box walls are a
    computational window.
    """
    p = np.asarray(p, dtype=float)
    d = domain.distance(p)
    return float(d) if p.ndim == 1 else d


def _orthonormal_frame(normal):
    """Rotation whose last column is ``normal`` (unit)."""
    nrm = np.asarray(normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    n = len(nrm)
    if n == 2:
        return np.array([[nrm[1], nrm[0]], [-nrm[0], nrm[1]]])
    # Householder-free completion by Gram-Schmidt against the coordinate axes
    basis = []
    for e in np.eye(n):
        v = e - (e @ nrm) * nrm - sum((e @ b) * b for b in basis)
        if np.linalg.norm(v) > 1e-8 and len(basis) < n - 1:
            basis.append(v / np.linalg.norm(v))
    R = np.column_stack(basis + [nrm])
    if np.linalg.det(R) < 0:
        R[:, 0] *= -1
    return R


# ---------------------------------------------------------------------------
# graph representation


class GraphDomain(ConvexDomain):
    """``{x in box : q(x') < x_n < top}`` with a convex floor graph ``q``.

    Parameters
    ----------
    lower, upper : sequence of float
        Bounds of the x'-box (length n-1).
    top : float
        Height of the window.
    q : callable, optional
        Floor ``q(x')`` taking an array of shape ``(..., n-1)``; default 0.
    dq, d2q : callable, optional
        Gradient (..., n-1) and Hessian (..., n-1, n-1) of q.  Estimated by
        central differences when omitted.
    """

    kind = "graph"

    def __init__(self, lower, upper, top: float = 1.0, q: Callable | None = None,
                 dq: Callable | None = None, d2q: Callable | None = None, q_data=None):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.dimension = len(self.lower) + 1
        if self.dimension not in (2, 3):
            raise ParameterError("graph domains are 2D or 3D")
        self.top = float(top)
        self.flat = q is None and q_data is None
        self.q_data = q_data
        if q_data is not None:
            q, dq, d2q = self._spline_floor(*q_data)
        self._q = q if q is not None else (lambda s: np.zeros(np.shape(s)[:-1]))
        self._dq = dq
        self._d2q = d2q

    @classmethod
    def from_samples(cls, axes, values, top: float = 1.0) -> "GraphDomain":
        """Floor given by samples on a tensor x'-grid (cubic interpolation)."""
        axes = [np.asarray(a, dtype=float) for a in axes]
        values = np.asarray(values, dtype=float).reshape([len(a) for a in axes])
        return cls([a[0] for a in axes], [a[-1] for a in axes], top, q_data=(axes, values))

    @staticmethod
    def _spline_floor(axes, values):
        if len(axes) == 1:
            cs = CubicSpline(axes[0], values)
            return (lambda s: cs(np.asarray(s)[..., 0]),
                    lambda s: cs(np.asarray(s)[..., 0], 1)[..., None],
                    lambda s: cs(np.asarray(s)[..., 0], 2)[..., None, None])
        rgi = RegularGridInterpolator(axes, values, method="cubic")
        return (lambda s: rgi(np.asarray(s).reshape(-1, 2)).reshape(np.shape(s)[:-1]), None, None)

    def q(self, s):
        return np.asarray(self._q(np.asarray(s, dtype=float)), dtype=float)

    def dq(self, s):
        s = np.asarray(s, dtype=float)
        if self._dq is not None:
            return np.asarray(self._dq(s), dtype=float)
        eps = 1e-6
        out = np.empty(s.shape)
        for k in range(s.shape[-1]):
            e = np.zeros(s.shape[-1])
            e[k] = eps
            out[..., k] = (self.q(s + e) - self.q(s - e)) / (2 * eps)
        return out

    def d2q(self, s):
        s = np.asarray(s, dtype=float)
        if self._d2q is not None:
            return np.asarray(self._d2q(s), dtype=float)
        m = s.shape[-1]
        eps = 1e-4
        out = np.empty(s.shape + (m,))
        for k in range(m):
            e = np.zeros(m)
            e[k] = eps
            out[..., k, :] = (self.dq(s + e) - self.dq(s - e)) / (2 * eps)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def contains(self, p, tol: float = _TOL):
        p = np.asarray(p, dtype=float)
        s, xn = p[..., :-1], p[..., -1]
        inbox = np.all((s >= self.lower - tol) & (s <= self.upper + tol), axis=-1)
        ok = inbox & (xn <= self.top + tol)
        qs = np.where(inbox[..., None], s, np.clip(s, self.lower, self.upper))
        return ok & (xn >= self.q(qs) - tol)

    def distance(self, p):
        p = self._check_inside(p)
        if self.flat:
            return np.maximum(p[..., -1], 0.0)
        return self._graph_distance(p)

    def _graph_distance(self, p):
        """Minimize |(s, q(s)) - p| over s by Newton on the stationarity condition."""
        shape = p.shape[:-1]
        P = p.reshape(-1, p.shape[-1])
        s = P[:, :-1].copy()
        pn = P[:, -1]
        m = s.shape[1]
        for _ in range(60):
            q, g, H = self.q(s), self.dq(s), self.d2q(s)
            r = q - pn
            grad = (s - P[:, :-1]) + r[:, None] * g
            J = np.eye(m)[None] + g[:, :, None] * g[:, None, :] + r[:, None, None] * H
            step = np.linalg.solve(J, grad[..., None])[..., 0]
            s = s - step
            if np.max(np.abs(step)) < 1e-14:
                break
        d = np.sqrt(np.sum((s - P[:, :-1]) ** 2, axis=1) + (self.q(s) - pn) ** 2)
        return d.reshape(shape)

    def local_chart(self, z) -> Chart:
        z = np.asarray(z, dtype=float)
        if abs(z[-1] - float(self.q(z[:-1]))) > 1e-8:
            raise DomainMembershipError("chart origin must lie on the floor graph")
        g = self.dq(z[:-1])
        nrm = np.concatenate([-g, [1.0]])
        R = _orthonormal_frame(nrm)
        if self.flat:
            return Chart(z, np.eye(self.dimension), lambda s: np.zeros(np.shape(s)[:-1]))

        def qc(s, _R=R, _z=z):
            s = np.atleast_2d(np.asarray(s, dtype=float))
            out = np.empty(len(s))
            for k, sk in enumerate(s):
                def f(t):
                    x = _z + _R[:, :-1] @ sk + t * _R[:, -1]
                    return x[-1] - float(self.q(x[:-1]))
                out[k] = brentq(f, -1.0, 1.0, xtol=1e-14)
            return out

        return Chart(z, R, qc)

    def bounding_box(self):
        lo = np.concatenate([self.lower, [float(np.min(self.q(np.array([self.lower, self.upper]))))]])
        return np.array([lo, np.concatenate([self.upper, [self.top]])])

    def to_json(self, sidecar: Path | None = None) -> dict:
        payload = {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "top": self.top}
        if self.q_data is not None:
            axes, values = self.q_data
            payload["axes"] = [np.asarray(a).tolist() for a in axes]
            if sidecar is not None:
                Path(sidecar).write_bytes(np.ascontiguousarray(values, dtype="<f8").tobytes())
                payload["q_file"] = Path(sidecar).name
            else:
                payload["q"] = np.asarray(values).ravel().tolist()
        elif not self.flat:
            raise ParameterError("only flat or sampled floors can be serialized")
        return {"dimension": self.dimension, "kind": "graph", "payload": payload}


# ---------------------------------------------------------------------------
# polygons / polytopes


class PolytopeDomain(ConvexDomain):
    """Convex hull of a vertex list (polygon in 2D, polytope in 3D)."""

    kind = "polygon"

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise ParameterError("vertices must have shape (m, 2) or (m, 3)")
        hull = ConvexHull(V)
        self.vertices = V[hull.vertices] if V.shape[1] == 2 else V
        self.dimension = V.shape[1]
        # facets a.x + b <= 0 with unit normals a
        eq = np.unique(np.round(hull.equations, 14), axis=0)
        self.normals = eq[:, :-1]
        self.offsets = eq[:, -1]

    @classmethod
    def box(cls, lower, upper) -> "PolytopeDomain":
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        import itertools

        corners = [np.where(c, upper, lower) for c in itertools.product([0, 1], repeat=len(lower))]
        return cls(corners)

    def _slack(self, p):
        return -(p @ self.normals.T + self.offsets)

    def contains(self, p, tol: float = _TOL):
        p = np.asarray(p, dtype=float)
        return np.all(self._slack(p) >= -tol, axis=-1)

    def distance(self, p):
        p = self._check_inside(p)
        return np.maximum(np.min(self._slack(p), axis=-1), 0.0)

    def local_chart(self, z) -> Chart:
        z = np.asarray(z, dtype=float)
        sl = self._slack(z)
        k = int(np.argmin(np.abs(sl)))
        if abs(sl[k]) > 1e-8:
            raise DomainMembershipError("chart origin must lie on the boundary")
        if np.sum(np.abs(sl) < 1e-8) > 1:
            raise ParameterError("chart origin sits on a vertex or edge; no flat chart")
        R = _orthonormal_frame(-self.normals[k])
        return Chart(z, R, lambda s: np.zeros(np.shape(s)[:-1]))

    def bounding_box(self):
        return np.array([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "kind": "polygon",
                "payload": {"vertices": self.vertices.tolist()}}


# ---------------------------------------------------------------------------
# level sets


class LevelSetDomain(ConvexDomain):
    """``{F < 0}`` for a convex function ``F`` (vectorized over (..., n))."""

    kind = "levelset"

    def __init__(self, F: Callable, dimension: int, box, grad: Callable | None = None,
                 name: str = ""):
        self.F = F
        self.gradF = grad
        self.dimension = dimension
        self.box = np.asarray(box, dtype=float)
        self.name = name

    def contains(self, p, tol: float = _TOL):
        return np.asarray(self.F(np.asarray(p, dtype=float))) <= tol

    def _grad(self, x):
        if self.gradF is not None:
            return np.asarray(self.gradF(x), dtype=float)
        eps = 1e-7
        return np.array([(self.F(x + e) - self.F(x - e)) / (2 * eps) for e in eps * np.eye(len(x))])

    def project(self, p) -> np.ndarray:
        """Closest boundary point to a single interior point."""
        p = np.asarray(p, dtype=float)
        res = minimize(lambda x: 0.5 * np.sum((x - p) ** 2), p, jac=lambda x: x - p,
                       constraints=[{"type": "eq", "fun": lambda x: float(self.F(x)),
                                     "jac": self._grad}],
                       method="SLSQP", options={"ftol": 1e-15, "maxiter": 200})
        return res.x

    def distance(self, p):
        p = self._check_inside(p)
        flat = p.reshape(-1, self.dimension)
        d = np.array([np.linalg.norm(self.project(x) - x) for x in flat])
        return d.reshape(p.shape[:-1])

    def local_chart(self, z) -> Chart:
        z = np.asarray(z, dtype=float)
        if abs(float(self.F(z))) > 1e-8:
            raise DomainMembershipError("chart origin must lie on the boundary")
        nrm = -self._grad(z)
        R = _orthonormal_frame(nrm)

        def qc(s, _R=R, _z=z):
            s = np.atleast_2d(np.asarray(s, dtype=float))
            out = np.empty(len(s))
            for k, sk in enumerate(s):
                out[k] = brentq(lambda t: float(self.F(_z + _R[:, :-1] @ sk + t * _R[:, -1])),
                                -1e-3 - np.dot(sk, sk), 0.5 * np.ptp(self.box), xtol=1e-14)
            return out

        return Chart(z, R, qc)

    def bounding_box(self):
        return self.box

    def to_json(self) -> dict:
        raise ParameterError("general level sets cannot be serialized; use BallDomain")


class BallDomain(LevelSetDomain):
    """Disk / ball: a level set with closed-form distance and chart."""

    def __init__(self, radius: float = 1.0, center=None, dimension: int = 2):
        if radius <= 0:
            raise ParameterError("radius must be positive")
        c = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.center = c
        super().__init__(lambda x: np.sum((np.asarray(x) - c) ** 2, axis=-1) - self.radius**2,
                         len(c), [c - radius, c + radius],
                         grad=lambda x: 2 * (np.asarray(x) - c), name="ball")

    def distance(self, p):
        p = self._check_inside(p)
        return np.maximum(self.radius - np.linalg.norm(p - self.center, axis=-1), 0.0)

    def local_chart(self, z) -> Chart:
        z = np.asarray(z, dtype=float)
        if abs(np.linalg.norm(z - self.center) - self.radius) > 1e-8 * self.radius:
            raise DomainMembershipError("chart origin must lie on the sphere")
        R = _orthonormal_frame(self.center - z)
        rad = self.radius
        return Chart(z, R, lambda s: rad - np.sqrt(rad**2 - np.sum(np.atleast_2d(s) ** 2, axis=-1)))

    def boundary_point(self, theta: float) -> np.ndarray:
        return self.center + self.radius * np.array([np.cos(theta), np.sin(theta)])

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "kind": "levelset",
                "payload": {"shape": "ball", "radius": self.radius, "center": self.center.tolist()}}


def domain_from_json(d: dict | str | Path, base: Path | None = None) -> ConvexDomain:
    """Build a domain from its JSON description (dict, JSON text or file path)."""
    if isinstance(d, Path) or (isinstance(d, str) and not d.lstrip().startswith("{")):
        path = Path(d)
        base = path.parent
        d = json.loads(path.read_text())
    elif isinstance(d, str):
        d = json.loads(d)
    kind = d.get("kind")
    pl = d.get("payload", {})
    dim = int(d.get("dimension", 2))
    if kind == "graph":
        if "axes" in pl:
            axes = [np.asarray(a, float) for a in pl["axes"]]
            if "q_file" in pl:
                vals = np.frombuffer(((base or Path(".")) / pl["q_file"]).read_bytes(), dtype="<f8")
            else:
                vals = np.asarray(pl["q"], float)
            return GraphDomain.from_samples(axes, vals, pl.get("top", 1.0))
        return GraphDomain(pl["lower"], pl["upper"], pl.get("top", 1.0))
    if kind == "polygon":
        return PolytopeDomain(pl["vertices"])
    if kind == "levelset" and pl.get("shape") == "ball":
        return BallDomain(pl.get("radius", 1.0), pl.get("center"), dim)
    raise ParameterError(f"unsupported domain description kind={kind!r}")


def domain_to_json(domain: ConvexDomain, path: Path | None = None) -> dict:
    """JSON description; graph samples go to a ``<path>.q.bin`` sidecar when ``path`` is given."""
    if isinstance(domain, GraphDomain):
        side = None if path is None else Path(path).with_suffix(".q.bin")
        out = domain.to_json(side)
    else:
        out = domain.to_json()
    if path is not None:
        Path(path).write_text(json.dumps(out, indent=1, sort_keys=True))
    return out


# ---------------------------------------------------------------------------
# anisotropic maps


def sliding_matrix(tau) -> np.ndarray:
    """Matrix of x -> x + tau * x_n (tau in R^{n-1})."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    n = len(tau) + 1
    A = np.eye(n)
    A[:-1, -1] = tau
    return A


@dataclass(frozen=True)
class AnisotropicMap:
    """The linear map ``D @ A_tau @ F_h``.

    ``F_h = diag(h^{1/2}, ..., h^{1/2}, h^{1/(2+alpha)})``, ``A_tau`` the
    sliding ``x + tau x_n`` and ``D`` an optional symmetric factor with
    ``e_n`` as eigenvector.
    """

    h: float
    alpha: float
    n: int = 2
    tau: np.ndarray = field(default=None)
    D: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterError("h must be positive")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.n not in (2, 3):
            raise ParameterError("dimension must be 2 or 3")
        tau = np.zeros(self.n - 1) if self.tau is None else np.atleast_1d(np.asarray(self.tau, float))
        if tau.shape != (self.n - 1,):
            raise ParameterError("tau must have n-1 entries")
        object.__setattr__(self, "tau", tau)
        D = np.eye(self.n) if self.D is None else np.asarray(self.D, float)
        if D.shape != (self.n, self.n) or not np.allclose(D, D.T, atol=1e-12):
            raise ParameterError("D must be symmetric n x n")
        en = np.eye(self.n)[-1]
        De = D @ en
        if np.linalg.norm(De - (De @ en) * en) > 1e-12 * max(1.0, np.linalg.norm(De)):
            raise ParameterError("e_n must be an eigenvector of D")
        object.__setattr__(self, "D", D)

    @property
    def F(self) -> np.ndarray:
        d = np.full(self.n, np.sqrt(self.h))
        d[-1] = self.h ** (1.0 / (2.0 + self.alpha))
        return np.diag(d)

    @property
    def A(self) -> np.ndarray:
        return sliding_matrix(self.tau)

    @property
    def matrix(self) -> np.ndarray:
        return self.D @ self.A @ self.F

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T


def anisotropic_dilation(h: float, alpha: float, n: int = 2) -> AnisotropicMap:
    """F_h as an AnisotropicMap (no sliding, D = I)."""
    return AnisotropicMap(h, alpha, n)


def compose_rescale(amap: AnisotropicMap, u: ScalarField, target: Grid,
                    method: str = "cubic") -> ScalarField:
    """``x -> u(D A F_h x) / h`` sampled on ``target``.

    Raises RangeError naming the first target-grid corner (or node) whose
    image leaves ``u``'s grid.
    """
    M = amap.matrix
    pts = target.points()
    img = pts @ M.T
    flat_img = img.reshape(-1, img.shape[-1])
    inside = np.array([u.grid.contains(p, tol=1e-12) for p in flat_img]) if u.grid.kind == "polar" else \
        np.all([(flat_img[:, k] >= a[0] - 1e-12) & (flat_img[:, k] <= a[-1] + 1e-12)
                for k, a in enumerate(u.grid.axes)], axis=0)
    if not np.all(inside):
        import itertools

        for c in itertools.product(*[(0, m - 1) for m in target.shape]):
            k = np.ravel_multi_index(c, target.shape)
            if not inside[k]:
                raise RangeError(f"image of corner {pts[c].tolist()} -> {flat_img[k].tolist()} leaves the source grid")
        k = int(np.argmin(inside))
        raise RangeError(f"image of node {pts.reshape(-1, pts.shape[-1])[k].tolist()} leaves the source grid")
    vals = u.interpolate(img, method=method) / amap.h
    return ScalarField(target, vals, role=u.role, alpha=u.alpha)


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class Section:
    """Nodes of ``{u < u(x0) + grad u(x0).(x - x0) + h}``."""

    center: np.ndarray
    height: float
    indicator: np.ndarray
    grid: Grid
    lower: np.ndarray
    upper: np.ndarray

    @property
    def extents(self) -> np.ndarray:
        return self.upper - self.lower

    def points(self) -> np.ndarray:
        return self.grid.points()[self.indicator]


def _gradient_at(u: ScalarField, idx) -> np.ndarray:
    g = u.grid
    if g.kind == "polar":
        raise ParameterError("pass the gradient explicitly for polar fields")
    from .fields import fd_weights

    out = np.empty(g.ndim)
    for k, a in enumerate(g.axes):
        i = idx[k]
        st = [i - 1, i, i + 1] if 0 < i < len(a) - 1 else ([0, 1, 2] if i == 0 else [len(a) - 3, len(a) - 2, len(a) - 1])
        w = fd_weights(a[i], a[st], 1)
        sl = list(idx)
        vals = []
        for j in st:
            sl[k] = j
            vals.append(u.values[tuple(sl)])
        out[k] = w @ np.asarray(vals)
    return out


def section_of(u: ScalarField, x0, h: float, gradient=None) -> Section:
    """Section of height ``h`` centred at the node nearest ``x0``.

    ``gradient`` overrides the finite-difference gradient at ``x0`` (useful
    at grid edges and for polar fields).
    """
    if not h > 0:
        raise ParameterError("section height must be positive")
    idx = u.grid.locate(x0)
    x0n = u.grid.points()[idx]
    grad = _gradient_at(u, idx) if gradient is None else np.asarray(gradient, dtype=float)
    pts = u.grid.points()
    plane = u.values[idx] + (pts - x0n) @ grad
    ind = u.values < plane + h
    if u.mask is not None:
        ind &= u.mask
    members = pts[ind]
    lo = members.min(axis=0) if len(members) else x0n.copy()
    hi = members.max(axis=0) if len(members) else x0n.copy()
    ind.setflags(write=False)
    return Section(x0n, float(h), ind, u.grid, lo, hi)


# ---------------------------------------------------------------------------
# Lipschitz ratio of boundary distances under rescaling


def _mapped_floor_distance(domain: GraphDomain, M: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Distance from points ``x`` to ``M^{-1}`` applied to the floor graph of ``domain``."""
    Minv = np.linalg.inv(M)
    out = np.empty(len(x))

    def floor_pt(s):
        y = np.concatenate([s, [float(domain.q(s))]])
        return Minv @ y

    for k, xk in enumerate(x):
        s0 = (M @ xk)[:-1]
        res = minimize(lambda s: 0.5 * np.sum((floor_pt(s) - xk) ** 2), s0, method="BFGS",
                       options={"gtol": 1e-13})
        out[k] = np.linalg.norm(floor_pt(res.x) - xk)
    return out


@dataclass(frozen=True)
class LipschitzRatioReport:
    seminorm: float
    ratio_min: float
    ratio_max: float
    samples: int


def distance_ratio_lipschitz(domain: GraphDomain, amap: AnisotropicMap, region=None,
                             samples: int = 200, seed: int = 0, xn_min: float = 0.05) -> LipschitzRatioReport:
    """Lipschitz seminorm of ``d(M x) / (h^{1/(2+alpha)} d_h(x))`` over sampled points.

    ``M = D A F_h`` and ``d_h`` is the distance to the floor of ``M^{-1}(domain)``.
    ``region`` may be an explicit (m, n) point array; otherwise points are
    drawn from ``{U_0 < 1, x_n >= xn_min}`` inside the rescaled domain.
    """
    if not isinstance(domain, GraphDomain):
        raise ParameterError("distance ratios are defined on graph domains")
    M = amap.matrix
    n = domain.dimension
    if region is None:
        rng = np.random.default_rng(seed)
        a = amap.alpha
        pts = []
        tries = 0
        while len(pts) < samples and tries < 200:
            tries += 1
            x = rng.uniform(-np.sqrt(2), np.sqrt(2), size=(4 * samples, n))
            x[:, -1] = rng.uniform(0, ((1 + a) * (2 + a)) ** (1 / (2 + a)), size=4 * samples)
            U0 = 0.5 * np.sum(x[:, :-1] ** 2, axis=1) + x[:, -1] ** (2 + a) / ((1 + a) * (2 + a))
            y = x @ M.T
            ok = (U0 < 1) & (x[:, -1] >= xn_min) & domain.contains(y)
            ok &= y[:, -1] > domain.q(y[:, :-1]) + 1e-12
            pts.extend(x[ok])
        region = np.asarray(pts[:samples])
    region = np.asarray(region, dtype=float)
    if len(region) < 2:
        raise SamplingError("need at least 2 sample points")
    y = region @ M.T
    d = domain.distance(y)
    if domain.flat:
        # the sliding and D keep {x_n = 0} fixed, so the rescaled floor is flat too
        dh = region[:, -1]
    else:
        dh = _mapped_floor_distance(domain, M, region)
    ratio = d / (amap.h ** (1.0 / (2.0 + amap.alpha)) * dh)
    diff = np.abs(ratio[:, None] - ratio[None, :])
    dist = np.linalg.norm(region[:, None, :] - region[None, :, :], axis=-1)
    iu = np.triu_indices(len(region), 1)
    q = diff[iu] / dist[iu]
    return LipschitzRatioReport(float(np.max(q)), float(ratio.min()), float(ratio.max()), len(region))


def U0(x, alpha: float) -> np.ndarray:
    """Model solution ``|x'|^2/2 + x_n^{2+alpha}/((1+alpha)(2+alpha))``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum(x[..., :-1] ** 2, axis=-1) + np.maximum(x[..., -1], 0.0) ** (2 + alpha) / ((1 + alpha) * (2 + alpha))

