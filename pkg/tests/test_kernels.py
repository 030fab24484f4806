"""numba kernels against their numpy twins (DEGMA_DISABLE_NUMBA switches at call time)."""
import numpy as np
import pytest

from degma import _kernels
from degma._jit import ENV_FLAG, HAVE_NUMBA, backend_name
from degma.fields import frame_array


def _both(monkeypatch, fn):
    monkeypatch.setenv(ENV_FLAG, "1")
    assert backend_name() == "numpy"
    a = fn()
    monkeypatch.setenv(ENV_FLAG, "0")
    b = fn()
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return a, b


pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_backend_flag(monkeypatch):
    monkeypatch.setenv(ENV_FLAG, "0")
    assert backend_name() == "numba"
    monkeypatch.setenv(ENV_FLAG, "true")
    assert backend_name() == "numpy"


def test_wide_stencil(monkeypatch):
    rng = np.random.default_rng(0)
    x = np.linspace(-1, 1, 33)
    U = 0.5 * np.add.outer(x**2, x**2) + 0.01 * rng.standard_normal((33, 33))
    a, b = _both(monkeypatch, lambda: _kernels.wide_stencil(U, x[1] - x[0], frame_array()))
    for p, q in zip(a, b):
        assert np.allclose(p, q, rtol=1e-12, atol=1e-12, equal_nan=True)


def test_lower_hull(monkeypatch):
    rng = np.random.default_rng(1)
    xs = np.sort(rng.uniform(-1, 1, 300))
    f = xs**2 + 0.3 * rng.standard_normal(300)
    a, b = _both(monkeypatch, lambda: _kernels.lower_hull(xs, f))
    for p, q in zip(a, b):
        assert np.array_equal(p, q)


def test_conjugate(monkeypatch):
    xs = np.linspace(-1, 1, 200)
    f = np.cosh(xs)
    s = np.linspace(-2, 2, 150)
    a, b = _both(monkeypatch, lambda: _kernels.conjugate(xs, f, s))
    assert np.allclose(a[0], b[0], rtol=1e-14, atol=1e-14)
    assert np.array_equal(a[1], b[1])


@pytest.mark.parametrize("metric, alpha", [(0, 0.0), (1, 1.0), (1, 0.5)])
def test_pair_quotients(monkeypatch, metric, alpha):
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(400, 2))
    V = rng.standard_normal((400, 3))
    I = rng.integers(0, 400, 5000)
    J = rng.integers(0, 400, 5000)
    keep = I != J
    a, b = _both(monkeypatch, lambda: _kernels.pair_quotients(X, V, I[keep], J[keep], 0.5, alpha, metric))
    assert np.allclose(a[0], b[0], rtol=1e-12)
