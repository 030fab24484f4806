"""Config-driven experiment runner.

A config is JSON::

    {"experiment": "ma-solve", "seed": 0, "ladder": [33, 65, 129], "payload": {...}}

Outputs land in ``<out>/<experiment>/<hash>/`` where ``hash`` is the
SHA-256 prefix of the canonical config (defaults filled in).  Every file
written is listed in ``record.json``; summary metrics are plain floats
and reproduce bitwise for a fixed config and seed.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, _jit
from .errors import ConfigError, DegmaError, StageError

EXPERIMENTS = ("ma-solve", "grushin", "eigen", "pipeline", "expansion-fit", "barriers", "metric-scan")
VERB_TO_EXPERIMENT = {
    "solve": "ma-solve", "grushin": "grushin", "eigen": "eigen", "pipeline": "pipeline",
    "fit": "expansion-fit", "barriers": "barriers", "metric-scan": "metric-scan",
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_ALPHA = {"type": "number", "minimum": 0, "maximum": 8}
_DOMAIN = {"type": "string", "pattern": r"^(strip|square|disk|file:.+)$"}
_FIELD_SRC = {"type": "string", "pattern": r"^(const:[-+0-9.eE]+|file:.+|[a-z][a-z0-9-]*)$"}

PAYLOAD_SCHEMAS = {
    "ma-solve": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "domain_ref": _DOMAIN, "alpha": _ALPHA, "g": _FIELD_SRC, "phi": _FIELD_SRC,
            "exact": {"type": ["string", "null"]}, "scheme": {"enum": ["standard", "wide"]},
            "tol": _POS, "stretch": {"type": "number", "minimum": 1}, "gamma": _NONNEG,
            "tau": _NUM,
        },
    },
    "grushin": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 8},
            "case": {"enum": ["x1xn", "xp2xn", "random"]},
            "fit_radius": _POS, "modes": {"type": "integer", "minimum": 1, "maximum": 8},
            "tol": _POS,
        },
    },
    "eigen": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "domain_ref": {"enum": ["disk"]}, "radius": _POS, "tol": _POS,
            "stretch": {"type": "number", "minimum": 1},
        },
    },
    "pipeline": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "chain": {"enum": ["eigen-to-legendre"]}, "domain_ref": {"enum": ["disk"]},
            "tol": _POS, "angle": _NUM, "half_width": _POS, "height": _POS,
            "stretch": {"type": "number", "minimum": 1},
        },
    },
    "expansion-fit": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "source": {"type": "string", "pattern": r"^(U0|file:.+)$"}, "alpha": _ALPHA,
            "tau": _NUM, "z": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "stretch": {"type": "number", "minimum": 1},
            "radii": {"type": ["array", "null"], "items": _POS, "minItems": 2},
        },
    },
    "barriers": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "suite": {"enum": ["all", "determinant", "matrix", "grushin"]},
            "points": {"type": "integer", "minimum": 10}, "matrices": {"type": "integer", "minimum": 10},
        },
    },
    "metric-scan": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "alphas": {"type": "array", "items": _ALPHA, "minItems": 1},
            "samples": {"type": "integer", "minimum": 100}, "n": {"enum": [2, 3]},
        },
    },
}

DEFAULTS = {
    "ma-solve": ({"domain_ref": "strip", "alpha": 1.0, "g": "const:1.0", "phi": "U0", "exact": "U0",
                  "scheme": "standard", "tol": 1e-9, "stretch": 4.0, "gamma": 0.5, "tau": 0.0},
                 [33, 65, 129]),
    "grushin": ({"alpha": 1.0, "case": "xp2xn", "fit_radius": 0.5, "modes": 4, "tol": 1e-9}, [33, 65, 129]),
    "eigen": ({"domain_ref": "disk", "radius": 1.0, "tol": 1e-6, "stretch": 4.0}, [65, 129]),
    "pipeline": ({"chain": "eigen-to-legendre", "domain_ref": "disk", "tol": 1e-6, "angle": -math.pi / 2,
                  "half_width": 0.3, "height": 0.3, "stretch": 4.0}, [65]),
    "expansion-fit": ({"source": "U0", "alpha": 1.0, "tau": 0.0, "z": [0.0, 0.0], "stretch": 4.0,
                       "radii": None}, [65]),
    "barriers": ({"suite": "all", "points": 1000, "matrices": 10000}, []),
    "metric-scan": ({"alphas": [0.0, 0.5, 1.0, 2.0], "samples": 10000, "n": 2}, []),
}

CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "ladder": {"type": "array", "items": {"type": "integer", "minimum": 5}},
        "payload": {"type": "object"},
        "out": {"type": "string"},
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _validate(instance, schema, prefix=()):
    v = jsonschema.Draft7Validator(schema)
    errs = sorted(v.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        e = errs[0]
        raise ConfigError(e.message, _pointer(list(prefix) + list(e.absolute_path)))


@dataclass
class ExperimentConfig:
    experiment: str
    payload: dict
    seed: int = 0
    ladder: list = field(default_factory=list)
    out: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _validate(d, CONFIG_SCHEMA)
        kind = d["experiment"]
        defaults, ladder = DEFAULTS[kind]
        payload = copy.deepcopy(defaults)
        payload.update(d.get("payload", {}))
        _validate(d.get("payload", {}), PAYLOAD_SCHEMAS[kind], ("payload",))
        lad = list(d.get("ladder", ladder))
        if kind in ("ma-solve", "grushin", "eigen", "pipeline", "expansion-fit") and not lad:
            raise ConfigError("ladder must not be empty", "/ladder")
        if kind == "ma-solve" and payload["domain_ref"] == "disk" and payload.get("exact"):
            raise ConfigError("no manufactured solution on the disk; set exact to null", "/payload/exact")
        return cls(kind, payload, int(d.get("seed", 0)), lad, d.get("out", "out"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    def canonical(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "ladder": self.ladder, "payload": self.payload}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    version: str
    wall_times: dict
    files: list
    metrics: dict
    config: dict
    backend: str = ""
    threads: int = 1
    deterministic: bool = False

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash, "tool_version": self.version, "wall_times": self.wall_times,
            "files": self.files, "metrics": self.metrics, "config": self.config, "backend": self.backend,
            "threads": self.threads, "deterministic": self.deterministic,
        }


class _Run:
    """Output directory bookkeeping for one experiment."""

    def __init__(self, cfg: ExperimentConfig, root: Path):
        self.cfg = cfg
        self.dir = root / cfg.experiment / cfg.hash
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list = []
        self.metrics: dict = {"seed": cfg.seed}
        self.times: dict = {}

    def path(self, name) -> Path:
        p = self.dir / name
        rel = p.relative_to(self.dir).as_posix()
        if rel not in self.files:
            self.files.append(rel)
        return p

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable))

    def write_csv(self, name, rows):
        if not rows:
            return
        keys = list(rows[0])
        with self.path(name).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow({k: _cell(r[k]) for k in keys})

    def save_field(self, stem, u):
        from .fields import save_field

        for p in save_field(u, self.dir / stem):
            self.path(p.name)

    def plot(self, csv_name, kind, svg_name=None):
        from .plotting import plot

        svg_name = svg_name or Path(csv_name).with_suffix(".svg").name
        plot(self.dir / csv_name, kind, self.path(svg_name))

    def stage(self, name):
        return _Stage(self, name)


class _Stage:
    def __init__(self, run, name):
        self.run, self.name = run, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, ev, tb):
        self.run.times[self.name] = time.perf_counter() - self.t0
        if ev is not None and isinstance(ev, DegmaError) and not isinstance(ev, StageError):
            raise StageError(self.name, ev) from ev
        return False


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# shared builders


def _u0(alpha):
    k = (1.0 + alpha) * (2.0 + alpha)
    return lambda x, y: 0.5 * x**2 + np.maximum(y, 0.0) ** (2.0 + alpha) / k


def _expression(name: str, p: dict):
    a, tau = p.get("alpha", 1.0), p.get("tau", 0.0)
    U = _u0(a)
    table = {
        "zero": lambda x, y: np.zeros_like(x),
        "U0": lambda x, y: U(x + tau * y, y),
        "half-square": lambda x, y: 0.5 * (x**2 + y**2),
        "perturbed": lambda x, y: 1.0 + 0.01 * np.hypot(x, y) ** p.get("gamma", 0.5),
    }
    if name not in table:
        raise ConfigError(f"unknown expression id {name!r}; known: {sorted(table)}")
    return table[name]


def _field_source(spec: str, p: dict, pointer: str):
    from .fields import load_field

    if spec.startswith("const:"):
        return float(spec[6:])
    if spec.startswith("file:"):
        try:
            return load_field(spec[5:])
        except OSError as exc:
            raise ConfigError(f"cannot read field snapshot: {exc}", pointer) from exc
    try:
        return _expression(spec, p)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], pointer) from None


def _domain_and_grid(ref: str, N: int, stretch: float, radius: float = 1.0):
    from .fields import Grid
    from .geometry import BallDomain, GraphDomain, PolytopeDomain, domain_from_json

    if ref == "strip":
        return GraphDomain([-1.0], [1.0], 1.0), Grid.graded([(-1, 1), (0, 1)], (N, N), stretch=stretch)
    if ref == "square":
        return PolytopeDomain.box([0.0, 0.0], [1.0, 1.0]), Grid.uniform([(0, 1), (0, 1)], (N, N))
    if ref == "disk":
        return BallDomain(radius), Grid.polar(radius, N, stretch=stretch)
    try:
        dom = domain_from_json(Path(ref[5:]))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read domain file: {exc}", "/payload/domain_ref") from exc
    box = dom.bounding_box()
    if dom.kind == "graph" and dom.flat:
        return dom, Grid.graded(list(zip(box[0], box[1])), (N, N), stretch=stretch)
    return dom, Grid.uniform(list(zip(box[0], box[1])), (N, N))


def _convergence(rows, key="error"):
    from .analysis import convergence_order

    errs = [(r["h"], r[key]) for r in rows]
    if len(errs) < 3:
        return float("nan")
    return float(convergence_order(errs).slope)


# ---------------------------------------------------------------------------
# experiments


def _run_ma_solve(run: _Run):
    from .ma_solver import MAProblem, residual, solve_dirichlet

    cfg, p = run.cfg, run.cfg.payload
    g = _field_source(p["g"], p, "/payload/g")
    phi = _field_source(p["phi"], p, "/payload/phi")
    exact = _expression(p["exact"], p) if p.get("exact") else None
    rows = []
    sol = None
    for N in cfg.ladder:
        with run.stage(f"solve-{N}"):
            dom, grid = _domain_and_grid(p["domain_ref"], N, p["stretch"])
            prob = MAProblem(dom, grid, alpha=p["alpha"], g=g, phi=phi, scheme=p["scheme"])
            rep = solve_dirichlet(prob, tol=p["tol"])
        sol = rep.solution
        row = {"N": N, "h": float(grid.h), "residual": float(rep.final_residual), "iterations": rep.iterations}
        if exact is not None:
            row["error"] = float(np.max(np.abs(sol.values - exact(*grid.coords()))))
        rows.append(row)
        run.write_json(f"report_{N}.json", rep.to_json())
    run.write_csv("convergence.csv", rows)
    run.metrics["levels"] = rows
    if exact is not None:
        run.metrics["slope"] = _convergence(rows)
        run.metrics["max_error_finest"] = rows[-1]["error"]
        run.plot("convergence.csv", "loglog")
    run.save_field("solution", sol)
    _field_plot(run, sol, "solution")


def _field_plot(run, u, stem):
    from .fields import export_csv_slice

    export_csv_slice(u, run.path(f"{stem}.csv"))
    run.plot(f"{stem}.csv", "field-heatmap")


def _random_floor_data(seed: int, modes: int):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(modes, modes))

    def phi(x, y):
        s = 0.0
        for i in range(modes):
            for j in range(modes):
                s = s + c[i, j] * np.cos(i * x + 0.3 * j) * np.cos(j * y) / (1 + i + j)
        return y * s

    return phi


def _run_grushin(run: _Run):
    from .fields import Grid
    from .grushin import GrushinProblem, fit_tangent_profile, solve_grushin

    cfg, p = run.cfg, run.cfg.payload
    al = p["alpha"]
    case = p["case"]
    rows = []
    for N in cfg.ladder:
        with run.stage(f"solve-{N}"):
            if case == "random":
                grid = Grid.uniform([(-1, 1), (0, 1)], (N, (N + 1) // 2))
                phi = _random_floor_data(cfg.seed, p["modes"])
                w = solve_grushin(GrushinProblem(grid, al, phi=phi), tol=p["tol"])
                fit = fit_tangent_profile(w, al, fit_radius=p["fit_radius"])
                rows.append({"N": N, "h": float(grid.h), **fit.row()})
                continue
            grid = Grid.uniform([(-1, 1), (0, 1)], (N, N))
            if case == "x1xn":
                exact, forcing = (lambda x, y: x * y), None
            else:
                exact, forcing = (lambda x, y: x * x * y), (lambda x, y: 2.0 * y)
            w = solve_grushin(GrushinProblem(grid, al, forcing=forcing, phi=exact), tol=p["tol"])
            err = np.abs(w.values - exact(*grid.coords()))[w.mask]
            rows.append({"N": N, "h": float(grid.h), "error": float(err.max())})
    if case == "random":
        run.write_csv("tangent_fits.csv", rows)
        run.metrics["slopes"] = [r["slope"] for r in rows]
        run.metrics["a0"] = [r["a0"] for r in rows]
    else:
        run.write_csv("convergence.csv", rows)
        run.metrics["levels"] = rows
        run.metrics["slope"] = _convergence(rows)
        if min(r["error"] for r in rows) > 0:
            run.plot("convergence.csv", "loglog")
    run.save_field("solution", w)


def _run_eigen(run: _Run):
    from .eigen import richardson, solve_eigen

    cfg, p = run.cfg, run.cfg.payload
    lams = []
    rep = None
    for N in cfg.ladder:
        with run.stage(f"eigen-{N}"):
            dom, grid = _domain_and_grid("disk", N, p["stretch"], p["radius"])
            rep = solve_eigen(dom, grid, tol=p["tol"])
        lams.append(rep.lam)
        run.write_json(f"eigen_{N}.json", rep.to_json())
        run.write_csv(f"residual_history_{N}.csv",
                      [{"iteration": i + 1, "residual": r, "lambda": l}
                       for i, (r, l) in enumerate(zip(rep.residual_history, rep.lam_history))])
    run.metrics["lambda"] = [float(x) for x in lams]
    run.metrics["residual"] = float(rep.residual)
    if len(lams) >= 2:
        run.metrics["lambda_richardson"] = float(richardson(lams[-2], lams[-1]))
    run.save_field("eigenfunction", rep.u)
    _field_plot(run, rep.u, "eigenfunction")


def pipeline_stages(N: int, p: dict, report=None) -> dict:
    """eigen -> hodograph -> partial Legendre -> transformed-equation residual.

    ``report`` reuses an eigen solve on the matching disk grid.
    """
    from .eigen import solve_eigen
    from .transforms import (hessian_inverse_check, hodograph, hodograph_residual, legendre_involution_error,
                             partial_legendre, quadratic_interpolation_bound, transformed_pde_residual)

    out = {}
    t = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except DegmaError as exc:
            raise StageError(name, exc) from exc
        finally:
            t[name] = time.perf_counter() - t0

    dom, grid = _domain_and_grid("disk", N, p["stretch"])
    rep = report if report is not None else timed("eigen", lambda: solve_eigen(dom, grid, tol=p["tol"]))
    lam = rep.lam
    out["eigen"] = {"lambda": float(lam), "residual": float(rep.residual), "iterations": rep.iterations}
    z = np.array([math.cos(p["angle"]), math.sin(p["angle"])])
    M = (N - 1) // 2 + 1
    h = timed("hodograph", lambda: hodograph(rep.u, z, domain=dom, half_width=p["half_width"],
                                             height=p["height"], shape=(M, M)))
    et = hodograph_residual(h.field, lam=lam)
    out["hodograph"] = {"shape": [M, M], "residual": float(np.max(np.abs(et.values[et.mask])))}
    pair = timed("legendre", lambda: partial_legendre(h.field))
    inv = legendre_involution_error(pair)
    qb = quadratic_interpolation_bound(pair)
    out["legendre"] = {"involution_error": float(inv), "interpolation_bound": float(qb),
                       "ratio": float(inv / qb) if qb > 0 else float("inf")}
    hw, ht = p["half_width"], p["height"]
    pts = np.column_stack([np.linspace(-2 * hw / 3, 2 * hw / 3, 9), np.linspace(ht / 6, 5 * ht / 6, 9)])

    def residual_stage():
        rs = transformed_pde_residual(pair, alpha=2.0, coefficient=lam**2)
        return rs, hessian_inverse_check(pair, pts)

    rs, hinv = timed("residual", residual_stage)
    out["residual"] = {"transformed_residual": float(np.max(np.abs(rs.values[rs.mask]))),
                       "hessian_inverse_mismatch": float(hinv)}
    return {"stages": out, "times": t, "eigenfunction": rep.u}


def _run_pipeline(run: _Run):
    cfg, p = run.cfg, run.cfg.payload
    per = {}
    for N in cfg.ladder:
        res = pipeline_stages(N, p)
        for k, v in res["times"].items():
            run.times[f"{k}-{N}"] = v
        per[str(N)] = res["stages"]
        run.write_json(f"stages_{N}.json", res["stages"])
    run.metrics["stages"] = per


def _run_fit(run: _Run):
    from .analysis import fit_boundary_expansion
    from .fields import load_field, sample

    cfg, p = run.cfg, run.cfg.payload
    rows = []
    for N in cfg.ladder:
        with run.stage(f"fit-{N}"):
            if p["source"] == "U0":
                _, grid = _domain_and_grid("strip", N, p["stretch"])
                u = sample(_expression("U0", p), grid)
            else:
                u = load_field(p["source"][5:])
            f = fit_boundary_expansion(u, np.asarray(p["z"], float), p["alpha"], radii=p["radii"])
        rows.append({"N": N, **f.row()})
    run.write_csv("expansion_fit.csv", rows)
    run.metrics["fits"] = rows


def _run_barriers(run: _Run):
    from .barriers import run_suite

    p = run.cfg.payload
    with run.stage("suite"):
        rows = run_suite(p["suite"], seed=run.cfg.seed, points=p["points"], matrices=p["matrices"])
    run.write_csv("results.csv", [r.row() for r in rows])
    run.metrics["rows"] = len(rows)
    run.metrics["failures"] = sum(not r.passed for r in rows)
    worst = {}
    for r in rows:
        worst[r.name] = max(worst.get(r.name, 0.0), float(r.violation))
    run.metrics["worst_violation"] = worst


def _run_metric_scan(run: _Run):
    from .analysis import metric_bounds, metric_equivalence_scan, quasi_triangle_constant

    p = run.cfg.payload
    rows = []
    for al in p["alphas"]:
        with run.stage(f"scan-{al}"):
            s = metric_equivalence_scan(al, samples=p["samples"], seed=run.cfg.seed, n=p["n"])
            q = quasi_triangle_constant(al, samples=p["samples"], seed=run.cfg.seed, n=p["n"])
        lo, hi = metric_bounds(al, p["n"])
        rows.append({"alpha": al, "c_low": s.c_low, "C_high": s.C_high, "c_bound": lo, "C_bound": hi,
                     "quasi_triangle": q, "quasi_triangle_bound": 2.0 ** (al / 2.0)})
    run.write_csv("metric_scan.csv", rows)
    run.metrics["scan"] = rows


RUNNERS = {
    "ma-solve": _run_ma_solve, "grushin": _run_grushin, "eigen": _run_eigen, "pipeline": _run_pipeline,
    "expansion-fit": _run_fit, "barriers": _run_barriers, "metric-scan": _run_metric_scan,
}


def deterministic_mode() -> bool:
    return os.environ.get("MA_DETERMINISTIC", "0").strip() in ("1", "true", "yes", "on")


def set_threads(k: int | None) -> int:
    """Cap kernel threads; deterministic mode pins a single thread."""
    if deterministic_mode():
        k = 1
    if k is None:
        return 1
    if k < 1:
        raise ConfigError("thread count must be positive", "/threads")
    if _jit.HAVE_NUMBA:
        import numba

        numba.set_num_threads(min(k, numba.config.NUMBA_NUM_THREADS))
    return k


def run(config: ExperimentConfig, out=None, threads: int | None = None) -> RunRecord:
    """Execute ``config`` and write its artifacts; returns the record."""
    nthreads = set_threads(threads)
    root = Path(out if out is not None else config.out)
    r = _Run(config, root)
    t0 = time.perf_counter()
    RUNNERS[config.experiment](r)
    r.times["total"] = time.perf_counter() - t0
    r.files.append("record.json")
    rec = RunRecord(config.hash, __version__, r.times, sorted(r.files), _plain(r.metrics), config.canonical(),
                    _jit.backend_name(), nthreads, deterministic_mode())
    (r.dir / "record.json").write_text(json.dumps(rec.to_json(), indent=1, sort_keys=True, default=_jsonable))
    return rec


def _plain(obj):
    """Convert numpy scalars so metrics round-trip through JSON exactly."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degma", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--out", default=None, help="output root (default: out)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("solve", "grushin", "fit", "metric-scan"):
        sub.add_parser(verb, parents=[common])
    e = sub.add_parser("eigen", parents=[common])
    e.add_argument("--domain", choices=["disk"], default=None)
    e.add_argument("--grid", type=int, default=None)
    e.add_argument("--tol", type=float, default=None)
    pl = sub.add_parser("pipeline", parents=[common])
    pl.add_argument("chain", nargs="?", default="eigen-to-legendre", choices=["eigen-to-legendre"])
    pl.add_argument("--domain", choices=["disk"], default=None)
    pl.add_argument("--grid", type=int, default=None)
    b = sub.add_parser("barriers", parents=[common])
    b.add_argument("action", nargs="?", default="verify", choices=["verify"])
    b.add_argument("--suite", default=None, choices=["all", "determinant", "matrix", "grushin"])
    pt = sub.add_parser("plot")
    pt.add_argument("csv")
    pt.add_argument("--kind", required=True, choices=["loglog", "profile", "field-heatmap"])
    pt.add_argument("--output", default=None)
    return ap


def config_from_args(args) -> ExperimentConfig:
    kind = VERB_TO_EXPERIMENT[args.verb]
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        d = {"experiment": kind}
    if d.get("experiment", kind) != kind:
        raise ConfigError(f"config is for {d.get('experiment')!r}, verb {args.verb!r} runs {kind!r}",
                          "/experiment")
    d.setdefault("experiment", kind)
    payload = dict(d.get("payload", {}))
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "domain", None):
        payload["domain_ref"] = args.domain
    if getattr(args, "grid", None):
        d["ladder"] = [args.grid]
    if getattr(args, "tol", None):
        payload["tol"] = args.tol
    if getattr(args, "suite", None):
        payload["suite"] = args.suite
    d["payload"] = payload
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "plot":
            from .plotting import plot

            print(plot(args.csv, args.kind, args.output))
            return 0
        cfg = config_from_args(args)
        rec = run(cfg, out=args.out, threads=args.threads)
    except DegmaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out or cfg.out) / cfg.experiment / rec.config_hash
    print(out_dir)
    if cfg.experiment == "barriers":
        print(f"rows {rec.metrics['rows']}  failures {rec.metrics['failures']}")
        return 1 if rec.metrics["failures"] else 0
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
