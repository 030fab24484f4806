"""Acceptance criteria, one test group per criterion.

Each clause is recorded through ``conftest.record`` and printed as a
pass/fail line; the terminal summary shows one line per criterion.
Tolerances are pinned as module constants.
"""
import json
import time
import warnings

import numpy as np
import pytest

from conftest import record
from frozen_values import LAMBDA_B1
from degma.analysis import (_half_box_pairs, convergence_order, d_alpha, fit_boundary_expansion, fit_normal_exponent,
                            metric_bounds, metric_equivalence_scan, normal_profile,
                            quasi_triangle_constant)
from degma.barriers import run_suite
from degma.cli import DEFAULTS, ExperimentConfig, pipeline_stages, run
from degma.eigen import regularity_probe, richardson, solve_eigen
from degma.fields import Grid
from degma.geometry import BallDomain, GraphDomain
from degma.grushin import GrushinProblem, fit_tangent_profile, solve_grushin
from degma.ma_solver import MAProblem, solve_dirichlet

# pinned tolerances
C1_MAX_ERROR, C1_MIN_SLOPE, C1_MAX_SECONDS = 5e-3, 1.0, 60.0
C2_MAX_ERROR, C2_SLOPE, C2_SLOPE_TOL = 1e-3, 2.0, 0.3
C3_MIN_SLOPE, C3_MAX_DRIFT = 2.47, 0.15
C4_REL, C4_RESIDUAL = 0.02, 1e-6
C5_REL = 0.01
C6_REL = 0.05
C7_REL = 0.05
C8_REL = 0.20
C9_INVOLUTION_FACTOR, C9_MIN_ORDER = 5.0, 1.0
C10_DET_REL, C10_MATRIX_REL = 1e-12, 1e-12
C11_TRIANGLE_SLACK = 1e-9

ALPHAS = (0.5, 1.0, 2.0)
STRETCH = 4.0


@pytest.fixture(scope="session")
def disk_eigen():
    """Unit-disk eigen solves on the graded polar grids, shared by criteria 4-9."""
    cache = {}

    def get(N, radius=1.0):
        key = (N, radius)
        if key not in cache:
            cache[key] = solve_eigen(BallDomain(radius), Grid.polar(radius, N, stretch=STRETCH))
        return cache[key]

    return get


def u0_exact(alpha):
    k = (1.0 + alpha) * (2.0 + alpha)
    return lambda x, y: 0.5 * x * x + y ** (2.0 + alpha) / k


# ---------------------------------------------------------------------------
# 1: U_0 on the strip


@pytest.mark.parametrize("alpha", ALPHAS)
def test_c1_strip_u0(alpha):
    dom = GraphDomain([-1.0], [1.0], 1.0)
    exact = u0_exact(alpha)
    errs = []
    t0 = time.perf_counter()
    for N in (33, 65, 129):
        grid = Grid.graded([(-1, 1), (0, 1)], (N, N), stretch=STRETCH)
        rep = solve_dirichlet(MAProblem(dom, grid, alpha=alpha, g=1.0, phi=exact), tol=1e-9)
        errs.append((grid.h, float(np.max(np.abs(rep.solution.values - exact(*grid.coords()))))))
    elapsed = time.perf_counter() - t0
    slope = convergence_order(errs).slope
    ok = [
        record(1, f"alpha={alpha} error@129 <= {C1_MAX_ERROR}", errs[-1][1] <= C1_MAX_ERROR, f"{errs[-1][1]:.3e}"),
        record(1, f"alpha={alpha} slope >= {C1_MIN_SLOPE}", slope >= C1_MIN_SLOPE, f"{slope:.3f}"),
        record(1, f"alpha={alpha} time < {C1_MAX_SECONDS}s", elapsed < C1_MAX_SECONDS, f"{elapsed:.1f}s"),
    ]
    assert all(ok)


# ---------------------------------------------------------------------------
# 2: Grushin manufactured solutions


def _grushin_errors(exact, forcing):
    errs = []
    for N in (33, 65, 129):
        grid = Grid.uniform([(-1, 1), (0, 1)], (N, N))
        w = solve_grushin(GrushinProblem(grid, 1.0, forcing=forcing, phi=exact))
        errs.append((grid.h, float(np.max(np.abs(w.values - exact(*grid.coords()))[w.mask]))))
    return errs


@pytest.fixture(scope="module")
def grushin_x1xn():
    return _grushin_errors(lambda x, y: x * y, None)


def test_c2_xp2xn():
    errs = _grushin_errors(lambda x, y: x * x * y, lambda x, y: 2.0 * y)
    slope = convergence_order(errs).slope
    ok = [
        record(2, f"|x'|^2 x_n error@129 <= {C2_MAX_ERROR}", errs[-1][1] <= C2_MAX_ERROR, f"{errs[-1][1]:.3e}"),
        record(2, f"|x'|^2 x_n slope in {C2_SLOPE}+-{C2_SLOPE_TOL}", abs(slope - C2_SLOPE) <= C2_SLOPE_TOL,
               f"{slope:.3f}"),
    ]
    assert all(ok)


def test_c2_x1xn_error(grushin_x1xn):
    e = grushin_x1xn[-1][1]
    assert record(2, f"x1 x_n error@129 <= {C2_MAX_ERROR}", e <= C2_MAX_ERROR, f"{e:.3e}")


@pytest.mark.xfail(strict=True, reason="x1 x_n lies in the kernel of the discrete operator: errors sit at "
                                       "roundoff and no convergence order exists (see decision ledger)")
def test_c2_x1xn_slope(grushin_x1xn):
    with warnings.catch_warnings():
        # roundoff-level errors need not decrease monotonically
        warnings.simplefilter("ignore", RuntimeWarning)
        slope = convergence_order(grushin_x1xn).slope
    detail = "errors " + " ".join(f"{e:.1e}" for _, e in grushin_x1xn) + f" slope {slope:.2f}"
    assert record(2, f"x1 x_n slope in {C2_SLOPE}+-{C2_SLOPE_TOL}", abs(slope - C2_SLOPE) <= C2_SLOPE_TOL,
                  detail)


# ---------------------------------------------------------------------------
# 3: tangent-fit remainder slope


def _random_floor_data(seed=7, modes=4):
    c = np.random.default_rng(seed).normal(size=(modes, modes))

    def phi(x, y):
        s = 0.0
        for i in range(modes):
            for j in range(modes):
                s = s + c[i, j] * np.cos(i * x + 0.3 * j) * np.cos(j * y) / (1 + i + j)
        return y * s

    return phi


def test_c3_tangent_fit():
    phi = _random_floor_data()
    slopes = []
    for N in (129, 257, 513):
        grid = Grid.uniform([(-1, 1), (0, 1)], (N, (N + 1) // 2))
        w = solve_grushin(GrushinProblem(grid, 1.0, phi=phi))
        slopes.append(fit_tangent_profile(w, 1.0, fit_radius=0.5).slope)
    drift = np.abs(np.diff(slopes))
    txt = " ".join(f"{s:.3f}" for s in slopes)
    ok = [
        record(3, f"slope >= {C3_MIN_SLOPE} at 129/257/513", min(slopes) >= C3_MIN_SLOPE, txt),
        record(3, f"slope drift per refinement <= {C3_MAX_DRIFT}", np.all(drift <= C3_MAX_DRIFT),
               " ".join(f"{d:.3f}" for d in drift)),
    ]
    assert all(ok)


# ---------------------------------------------------------------------------
# 4, 5: eigenvalue scaling and the radial oracle


def test_c4_scaling(disk_eigen):
    r1, r2 = disk_eigen(257), disk_eigen(257, radius=2.0)
    rel = abs(r2.lam / (r1.lam / 4.0) - 1.0)
    ok = [
        record(4, f"lambda(B2) = lambda(B1)/4 within {C4_REL:.0%}", rel <= C4_REL, f"rel {rel:.2e}"),
        record(4, f"residuals <= {C4_RESIDUAL}", max(r1.residual, r2.residual) <= C4_RESIDUAL,
               f"{r1.residual:.2e} {r2.residual:.2e}"),
    ]
    assert all(ok)


def test_c5_radial_oracle(disk_eigen):
    lam = richardson(disk_eigen(129).lam, disk_eigen(257).lam)
    rel = abs(lam / LAMBDA_B1 - 1.0)
    assert record(5, f"Richardson lambda vs radial oracle within {C5_REL:.0%}", rel <= C5_REL,
                  f"{lam:.10f} vs {LAMBDA_B1:.10f} rel {rel:.1e}")


# ---------------------------------------------------------------------------
# 6: normal exponent of the degenerate disk problem


@pytest.mark.parametrize("alpha", ALPHAS)
def test_c6_normal_exponent(alpha):
    dom = BallDomain(1.0)
    grid = Grid.polar(1.0, 257, stretch=STRETCH)
    u = solve_dirichlet(MAProblem(dom, grid, alpha=alpha), tol=1e-10).solution
    t, v = normal_profile(u, np.array([1.0, 0.0]), dom, 0.2)
    p = fit_normal_exponent(t, v).exponent
    rel = abs(p / (2.0 + alpha) - 1.0)
    assert record(6, f"alpha={alpha} exponent = 2+alpha within {C6_REL:.0%}", rel <= C6_REL,
                  f"{p:.4f} rel {rel:.1e}")


# ---------------------------------------------------------------------------
# 7: boundary expansion of the eigenfunction


def test_c7_expansion_identity(disk_eigen):
    rep = disk_eigen(257)
    rf = 0.1
    rels = []
    for k in range(8):
        th = 2 * np.pi * k / 8 + 0.1
        z = np.array([np.cos(th), np.sin(th)])
        # det D^2 u = lambda^2 u^2 ~ lambda^2 b^2 d^2 near the boundary: alpha = 2, g(z) = lambda^2 b^2
        f = fit_boundary_expansion(rep.u, z, 2.0, domain=rep.domain, radii=[rf / 8, rf / 4, rf / 2, rf])
        gz = rep.lam**2 * f.b**2
        rels.append(f.a * np.linalg.det(f.M) / gz - 1.0)
    worst = float(np.max(np.abs(rels)))
    assert record(7, f"a det Q0 = g(z) at 8 points within {C7_REL:.0%}", worst <= C7_REL, f"worst {worst:.2e}")


# ---------------------------------------------------------------------------
# 8: Hessian Hölder seminorm stability


def test_c8_holder_stability(disk_eigen):
    a = regularity_probe(disk_eigen(129), 0.45).estimate
    b = regularity_probe(disk_eigen(257), 0.45).estimate
    rel = abs(b / a - 1.0)
    assert record(8, f"[D^2u]_C^0.45 change 129->257 <= {C8_REL:.0%}", rel <= C8_REL,
                  f"{a:.5f} -> {b:.5f} rel {rel:.1e}")


# ---------------------------------------------------------------------------
# 9: hodograph / partial Legendre pipeline


def test_c9_pipeline(disk_eigen):
    p = dict(DEFAULTS["pipeline"][0])
    hs, inv, hinv, eqn = [], [], [], []
    for N in (65, 129, 257):
        st = pipeline_stages(N, p, report=disk_eigen(N))["stages"]
        M = (N - 1) // 2 + 1
        hs.append(2 * p["half_width"] / (M - 1))
        inv.append(st["legendre"]["ratio"])
        hinv.append(st["residual"]["hessian_inverse_mismatch"])
        eqn.append(st["residual"]["transformed_residual"])
    o_hinv = convergence_order(list(zip(hs, hinv))).slope
    o_eqn = convergence_order(list(zip(hs, eqn))).slope
    ok = [
        record(9, f"involution <= {C9_INVOLUTION_FACTOR} x interpolation bound",
               max(inv) <= C9_INVOLUTION_FACTOR, "ratios " + " ".join(f"{r:.1e}" for r in inv)),
        record(9, f"Hessian-inverse mismatch order >= {C9_MIN_ORDER}", o_hinv >= C9_MIN_ORDER,
               f"{o_hinv:.2f} (" + " ".join(f"{e:.1e}" for e in hinv) + ")"),
        record(9, f"transformed-equation residual order >= {C9_MIN_ORDER}", o_eqn >= C9_MIN_ORDER,
               f"{o_eqn:.2f} (" + " ".join(f"{e:.1e}" for e in eqn) + ")"),
    ]
    assert all(ok)


# ---------------------------------------------------------------------------
# 10: barrier suites


def test_c10_barriers():
    rows = run_suite("all", seed=0, points=1000, matrices=10_000)
    det = [r.violation for r in rows if r.name == "determinant-identity"]
    mat = [r.violation for r in rows if r.name == "matrix-lower-bound"]
    gru = [r.violation for r in rows if r.name == "grushin-barrier"]
    ok = [
        record(10, f"determinant identity relative <= {C10_DET_REL}", max(det) <= C10_DET_REL,
               f"{len(det)} cases, worst {max(det):.1e}"),
        record(10, f"matrix margin >= -{C10_MATRIX_REL} scale on 10^4 PSD", max(mat) <= C10_MATRIX_REL,
               f"worst {max(mat):.1e}"),
        record(10, "L(wbar) <= 0", max(gru) <= 0.0, f"{len(gru)} cases"),
    ]
    assert all(ok) and all(r.passed for r in rows)


# ---------------------------------------------------------------------------
# 11: the distance d_alpha


@pytest.mark.parametrize("alpha", (0.0,) + ALPHAS)
def test_c11_metric_bounds(alpha):
    seed, samples = 0, 10_000
    scan = metric_equivalence_scan(alpha, samples=samples, seed=seed)
    c, C = metric_bounds(alpha)
    p = (2 + alpha) / 2

    def holds(y, z, lo, hi):
        e = np.linalg.norm(y - z, axis=1)
        d = d_alpha(y, z, alpha)
        return bool(np.all(lo * e**p <= d * (1 + 1e-12)) and np.all(d <= hi * e * (1 + 1e-12)))

    # the scanned pairs, regenerated from the seed
    y, z = _half_box_pairs(2, ([-1.0, 0.0], [1.0, 1.0]), samples, np.random.default_rng(seed))
    on_scan = holds(y, z, scan.c_low, scan.C_high)
    inside = scan.c_low >= c * (1 - 1e-12) and scan.C_high <= C * (1 + 1e-12)
    # analytic constants on an independent sample
    rng = np.random.default_rng(seed + 1)
    fresh = holds(rng.uniform([-1, 0], [1, 1], (samples, 2)), rng.uniform([-1, 0], [1, 1], (samples, 2)), c, C)
    assert record(11, f"alpha={alpha} bounds hold with scan constants", on_scan and inside and fresh,
                  f"c_low {scan.c_low:.4f} (>= {c:.4f}) C_high {scan.C_high:.4f} (<= {C:.4f})")


@pytest.mark.parametrize("alpha", ALPHAS)
def test_c11_quasi_triangle(alpha):
    q = quasi_triangle_constant(alpha, samples=10_000, seed=0)
    bound = 2 ** (alpha / 2) + C11_TRIANGLE_SLACK
    assert record(11, f"alpha={alpha} quasi-triangle constant <= 2^(alpha/2)", q <= bound,
                  f"{q:.6f} <= {bound:.6f}")


# ---------------------------------------------------------------------------
# 12: reproducibility


def _drop_timing(obj):
    if isinstance(obj, dict):
        return {k: _drop_timing(v) for k, v in obj.items() if k not in ("wall_time", "wall_times")}
    if isinstance(obj, list):
        return [_drop_timing(v) for v in obj]
    return obj


def _artifact(path):
    """File bytes; JSON files with their wall-clock entries removed."""
    if path.suffix == ".json":
        return json.dumps(_drop_timing(json.loads(path.read_text())), sort_keys=True)
    return path.read_bytes()


RERUN_CONFIGS = [
    {"experiment": "ma-solve", "seed": 3, "ladder": [17, 33, 65]},
    {"experiment": "grushin", "seed": 5, "ladder": [33, 65], "payload": {"case": "random"}},
    {"experiment": "eigen", "ladder": [33]},
    {"experiment": "pipeline", "ladder": [65]},
    {"experiment": "expansion-fit", "payload": {"tau": 0.2}},
    {"experiment": "barriers", "seed": 11, "payload": {"points": 200, "matrices": 2000}},
    {"experiment": "metric-scan", "seed": 2, "payload": {"samples": 2000}},
]


@pytest.mark.parametrize("d", RERUN_CONFIGS, ids=[c["experiment"] for c in RERUN_CONFIGS])
def test_c12_rerun_bitwise(d, tmp_path, monkeypatch):
    monkeypatch.setenv("MA_DETERMINISTIC", "1")
    cfg = ExperimentConfig.from_dict(d)
    a = run(cfg, out=tmp_path / "a")
    b = run(ExperimentConfig.from_dict(json.loads(json.dumps(d))), out=tmp_path / "b")
    ma = json.dumps(a.metrics, sort_keys=True)
    mb = json.dumps(b.metrics, sort_keys=True)
    same_files = all(_artifact(tmp_path / "a" / cfg.experiment / a.config_hash / f)
                     == _artifact(tmp_path / "b" / cfg.experiment / b.config_hash / f) for f in a.files)
    assert record(12, f"{cfg.experiment} metrics bitwise identical on rerun",
                  ma == mb and a.config_hash == b.config_hash and same_files,
                  f"hash {a.config_hash}, {len(a.files)} files")
