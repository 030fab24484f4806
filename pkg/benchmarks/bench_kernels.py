"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed (JIT warm-up), then ``repeat`` times per
backend; the best wall time is reported and outputs are compared.
"""
import argparse
import os
import time

import numpy as np

from degma import _kernels
from degma._jit import ENV_FLAG, HAVE_NUMBA
from degma.fields import frame_array


def _cases(rng):
    n = 257
    x = np.linspace(-1, 1, n)
    U = 0.5 * np.add.outer(x**2, x**2) + 0.01 * rng.standard_normal((n, n))
    F = frame_array()
    xs = np.sort(rng.uniform(-1, 1, 4000))
    f = xs**2 + 0.1 * np.abs(xs) ** 3
    s = np.linspace(-2, 2, 4000)
    X = rng.uniform(size=(5000, 2))
    V = rng.standard_normal((5000, 3))
    I = rng.integers(0, 5000, 200_000)
    J = rng.integers(0, 5000, 200_000)
    keep = I != J
    return {
        "wide_stencil 257^2": lambda: _kernels.wide_stencil(U, x[1] - x[0], F),
        "lower_hull 4000": lambda: _kernels.lower_hull(xs, f),
        "conjugate 4000x4000": lambda: _kernels.conjugate(xs, f, s),
        "pair_quotients 2e5": lambda: _kernels.pair_quotients(X, V, I[keep], J[keep], 0.5, 1.0, 1),
    }


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, rtol=1e-12, atol=1e-12, equal_nan=True) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    print(f"{'kernel':24s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}  match")
    for name, fn in cases.items():
        os.environ[ENV_FLAG] = "1"
        t_np, out_np = _best(fn, args.repeat)
        if HAVE_NUMBA:
            os.environ[ENV_FLAG] = "0"
            t_nb, out_nb = _best(fn, args.repeat)
            print(f"{name:24s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {_same(out_np, out_nb)}")
        else:
            print(f"{name:24s} {t_np:10.4f} {'-':>10s} {'-':>8s}  -")
    os.environ.pop(ENV_FLAG, None)


if __name__ == "__main__":
    main()
