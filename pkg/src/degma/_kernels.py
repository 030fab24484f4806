"""Hot loops, each with a numba version and a pure-numpy twin.

Public entry points dispatch on ``_jit.numba_enabled()`` at call time.  Both
paths perform the same floating-point operations per output entry, so they
agree to roundoff (usually bitwise).
"""
import numpy as np

from ._jit import njit, numba_enabled

# ---------------------------------------------------------------------------
# wide-stencil determinant


@njit
def _wide_stencil_nb(U, h, F):
    nx, ny = U.shape
    K = F.shape[0]
    P = np.zeros((nx, ny))
    kidx = -np.ones((nx, ny), dtype=np.int64)
    D1 = np.zeros((nx, ny))
    D2 = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            best = np.inf
            for k in range(K):
                a1, b1 = F[k, 0, 0], F[k, 0, 1]
                a2, b2 = F[k, 1, 0], F[k, 1, 1]
                ra = max(abs(a1), abs(a2))
                rb = max(abs(b1), abs(b2))
                if i - ra < 0 or i + ra > nx - 1 or j - rb < 0 or j + rb > ny - 1:
                    continue
                d1 = (U[i + a1, j + b1] - 2.0 * U[i, j] + U[i - a1, j - b1]) / (h * h * (a1 * a1 + b1 * b1))
                d2 = (U[i + a2, j + b2] - 2.0 * U[i, j] + U[i - a2, j - b2]) / (h * h * (a2 * a2 + b2 * b2))
                p = max(d1, 0.0) * max(d2, 0.0)
                if p < best:
                    best = p
                    kidx[i, j] = k
                    D1[i, j] = d1
                    D2[i, j] = d2
            if kidx[i, j] >= 0:
                P[i, j] = best
    return P, kidx, D1, D2


def _wide_stencil_np(U, h, F):
    nx, ny = U.shape
    P = np.full((nx, ny), np.inf)
    kidx = -np.ones((nx, ny), dtype=np.int64)
    D1 = np.zeros((nx, ny))
    D2 = np.zeros((nx, ny))
    for k in range(F.shape[0]):
        (a1, b1), (a2, b2) = F[k]
        ra = max(abs(a1), abs(a2))
        rb = max(abs(b1), abs(b2))
        if 2 * ra >= nx or 2 * rb >= ny:
            continue
        c = (slice(ra, nx - ra), slice(rb, ny - rb))

        def shifted(a, b):
            return U[ra + a:nx - ra + a, rb + b:ny - rb + b]

        d1 = (shifted(a1, b1) - 2.0 * U[c] + shifted(-a1, -b1)) / (h * h * (a1 * a1 + b1 * b1))
        d2 = (shifted(a2, b2) - 2.0 * U[c] + shifted(-a2, -b2)) / (h * h * (a2 * a2 + b2 * b2))
        p = np.maximum(d1, 0.0) * np.maximum(d2, 0.0)
        better = p < P[c]
        P[c] = np.where(better, p, P[c])
        kidx[c] = np.where(better, k, kidx[c])
        D1[c] = np.where(better, d1, D1[c])
        D2[c] = np.where(better, d2, D2[c])
    P[kidx < 0] = 0.0
    return P, kidx, D1, D2


def wide_stencil(U, h, F):
    """Minimum over frames of the product of positive directional second differences.

    Parameters
    ----------
    U : ndarray (nx, ny)
        Node values on a uniform grid with spacing ``h``.
    F : int ndarray (K, 2, 2)
        Frames; ``F[k]`` holds the two orthogonal lattice vectors.

    Returns
    -------
    P, kidx, D1, D2
        Minimal product, argmin frame (lowest index on ties, -1 if no frame
        fits), and the chosen directional second differences.
    """
    U = np.ascontiguousarray(U, dtype=np.float64)
    F = np.ascontiguousarray(F, dtype=np.int64)
    if numba_enabled():
        return _wide_stencil_nb(U, float(h), F)
    return _wide_stencil_np(U, float(h), F)


# ---------------------------------------------------------------------------
# discrete Legendre conjugate (one slice)


@njit
def _lower_hull_nb(x, f):
    n = x.shape[0]
    hull = np.empty(n, dtype=np.int64)
    m = 0
    for k in range(n):
        while m >= 2:
            i, j = hull[m - 2], hull[m - 1]
            # drop j if it lies on or above the segment (i, k)
            if (f[j] - f[i]) * (x[k] - x[i]) >= (f[k] - f[i]) * (x[j] - x[i]):
                m -= 1
            else:
                break
        hull[m] = k
        m += 1
    return hull[:m]


def _lower_hull_np(x, f):
    hull = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (f[j] - f[i]) * (x[k] - x[i]) >= (f[k] - f[i]) * (x[j] - x[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull, dtype=np.int64)


def lower_hull(x, f):
    """Indices of the lower convex hull of the points (x_k, f_k), x sorted."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    if numba_enabled():
        return _lower_hull_nb(x, f)
    return _lower_hull_np(x, f)


@njit
def _conjugate_nb(x, f, s):
    hull = _lower_hull_nb(x, f)
    m = hull.shape[0]
    q = s.shape[0]
    out = np.empty(q)
    arg = np.empty(q, dtype=np.int64)
    j = 0
    for t in range(q):
        # advance while the next hull edge has slope below s[t]
        while j < m - 1:
            a, b = hull[j], hull[j + 1]
            if (f[b] - f[a]) < s[t] * (x[b] - x[a]):
                j += 1
            else:
                break
        k = hull[j]
        out[t] = x[k] * s[t] - f[k]
        arg[t] = k
    return out, arg


def _conjugate_np(x, f, s):
    out = np.empty(len(s))
    arg = np.empty(len(s), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(len(x), 1))
    for a in range(0, len(s), chunk):
        vals = np.multiply.outer(s[a:a + chunk], x) - f
        k = np.argmax(vals, axis=1)
        arg[a:a + chunk] = k
        out[a:a + chunk] = x[k] * s[a:a + chunk] - f[k]
    return out, arg


def conjugate(x, f, s):
    """Discrete convex conjugate ``max_k (x_k s - f_k)`` at sorted slopes ``s``.

    The numba path walks the lower hull (linear time); the numpy path takes
    the brute-force maximum.  Returns values and maximizing node indices.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    if numba_enabled():
        return _conjugate_nb(x, f, s)
    return _conjugate_np(x, f, s)


# ---------------------------------------------------------------------------
# difference quotients over sampled pairs


@njit
def _pair_quotients_nb(X, V, I, J, gamma, alpha, metric):
    npairs = I.shape[0]
    n = X.shape[1]
    m = V.shape[1]
    q = np.empty(npairs)
    p = (2.0 + alpha) / 2.0
    for t in range(npairs):
        a, b = I[t], J[t]
        num = 0.0
        for c in range(m):
            d = V[a, c] - V[b, c]
            num += d * d
        num = np.sqrt(num)
        if metric == 0:
            dist = 0.0
            for c in range(n):
                d = X[a, c] - X[b, c]
                dist += d * d
            dist = np.sqrt(dist)
        else:
            dist = 0.0
            for c in range(n - 1):
                d = X[a, c] - X[b, c]
                dist += d * d
            dist = np.sqrt(dist) + abs(X[a, n - 1] ** p - X[b, n - 1] ** p)
        if dist > 0.0:
            q[t] = num / dist**gamma
        else:
            q[t] = 0.0
    return q


def _pair_quotients_np(X, V, I, J, gamma, alpha, metric):
    num = np.sqrt(np.sum((V[I] - V[J]) ** 2, axis=1))
    if metric == 0:
        dist = np.sqrt(np.sum((X[I] - X[J]) ** 2, axis=1))
    else:
        p = (2.0 + alpha) / 2.0
        dist = np.sqrt(np.sum((X[I, :-1] - X[J, :-1]) ** 2, axis=1)) + np.abs(X[I, -1] ** p - X[J, -1] ** p)
    q = np.zeros(len(I))
    pos = dist > 0
    q[pos] = num[pos] / dist[pos] ** gamma
    return q


def pair_quotients(X, V, I, J, gamma, alpha=0.0, metric=0):
    """``|V_a - V_b| / dist(X_a, X_b)^gamma`` for each sampled pair (a, b).

    ``V`` rows are vectors (Frobenius/Euclidean norm of the difference).
    ``metric`` 0 is Euclidean, 1 is the anisotropic distance with exponent
    ``alpha`` on the last coordinate.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    I = np.ascontiguousarray(I, dtype=np.int64)
    J = np.ascontiguousarray(J, dtype=np.int64)
    if numba_enabled():
        return _pair_quotients_nb(X, V, I, J, float(gamma), float(alpha), int(metric))
    return _pair_quotients_np(X, V, I, J, float(gamma), float(alpha), int(metric))
