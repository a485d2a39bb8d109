"""Scenario configuration, built-in scenarios and the end-to-end pipeline.

A scenario is a YAML mapping.  The metric is either a built-in by name or a
set of inline component expressions over named chart coordinates.  Which
parts of the pipeline run is controlled by ``checks``; every check writes its
own CSV or JSON table and contributes named assertions to ``summary.json``.
Every table row and every JSON document carries the scenario id and the code
version, and no timestamps or paths are written, so the same configuration
and seed give byte-identical outputs.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .causal import (GridSpec, boundary_generators, compactness_probe, eps_maximizer_compare,
                     export_masks, future_sets)
from .chart_metric import MetricField
from .curvature import measured_eps0, nec_csv, nec_threshold_sweep
from .errors import C1LabError, InvalidInputError
from .expr import compile_expression
from .focusing import focusing_functional, maximizing_bound, normalized_convergence, reports_csv
from .geodesics import (break_variation, broken_geodesic, branching_probe, funnel_csv, hausdorff,
                        integrate_geodesic, length_derivative, maximizer_search, shoot_connect)
from .metrics import BUILTIN_METRICS, builtin_metric
from .regularizer import convergence_report, regularize, report_csv
from .surfaces import (build_normals, convergence_pair, coordinate_level, flat_slice,
                       inner_trapped_test, plane, round_sphere, sample_surface)

__all__ = [
    "CHECKS",
    "BUILTIN_SCENARIOS",
    "Diagnostic",
    "ScenarioConfig",
    "RunResult",
    "load_config",
    "list_scenarios",
    "validate",
    "build_metric",
    "build_surfaces",
    "run_scenario",
]

CHECKS = ("trapped", "focusing", "causal", "compactness", "eps_compare", "regularization",
          "nec", "branching", "maximizer", "broken")
_NEEDS_SURFACE = {"trapped", "focusing", "causal", "compactness", "eps_compare"}
_NEEDS_EPS = {"eps_compare", "regularization", "nec"}
_KEYS = {"id", "description", "metric", "slice", "surface", "checks", "eps", "K", "delta", "b",
         "b_grid", "c_hint", "grid", "out", "samples", "nec", "branching", "maximizer", "broken",
         "eps_compare", "compactness", "expect", "tolerances", "seed", "topology"}


BUILTIN_SCENARIOS: Dict[str, dict] = {
    "minkowski-sphere": {
        "id": "minkowski-sphere",
        "description": "Round sphere r=2 in the t=0 slice of flat space; flat oracles.",
        "metric": {"name": "minkowski", "params": {"dim": 4, "lower": [-6, -6, -6, -6],
                                                    "upper": [6, 6, 6, 6]}},
        "slice": {"t0": 0.0},
        "surface": {"kind": "sphere", "radius": 2.0, "center": [0.0, 0.0, 0.0]},
        "checks": ["trapped", "focusing", "causal", "compactness", "eps_compare", "broken"],
        "eps": [0.2, 0.1, 0.05, 0.025],
        "K": {"lower": [-1, -3, -3, -3], "upper": [3, 3, 3, 3]},
        "delta": 0.1,
        "b": 1.0,
        "b_grid": [0.25 * k for k in range(1, 21)],
        "c_hint": 0.5,
        "grid": {"lower": [0, -3, -3, -3], "upper": [3, 3, 3, 3], "n": 32},
        "eps_compare": {"T": 1.0, "masks": True},
        "compactness": {"controlled": True},
        "broken": {"p": [0, 0, 0, 0], "v": [1, 0.9, 0, 0], "w": [1, -0.9, 0, 0],
                   "expected_length": 2.0 * math.sqrt(1 - 0.81), "s": 0.01, "random": 5},
        "expect": {"trapped": True, "controlled_failure": True},
        "topology": "single chart; piercing, fundamental-group and reflectivity hypotheses not checked",
    },
    "pg-trapped": {
        "id": "pg-trapped",
        "description": "Round sphere r=1 inside the horizon of Schwarzschild (m=1) in "
                       "Painleve-Gullstrand coordinates, slice t=0.",
        "metric": {"name": "painleve-gullstrand",
                   "params": {"m": 1.0, "r_excise": 0.3, "lower": [-0.5, -2, -2, -2],
                              "upper": [1.5, 2, 2, 2]}},
        "slice": {"t0": 0.0},
        "surface": {"kind": "sphere", "radius": 1.0, "center": [0.0, 0.0, 0.0]},
        "checks": ["trapped", "focusing", "causal", "compactness", "eps_compare"],
        "eps": [0.2, 0.1, 0.05, 0.025],
        "K": {"lower": [0, -1.5, -1.5, -1.5], "upper": [1, 1.5, 1.5, 1.5]},
        "delta": 0.1,
        "b": 1.0,
        "b_grid": [0.25, 0.5, 0.75, 1.0],
        "c_hint": 2.414,
        "grid": {"lower": [0, -1.9, -1.9, -1.9], "upper": [1.2, 1.9, 1.9, 1.9], "n": 32},
        "eps_compare": {"T": 1.0, "masks": False},
        "compactness": {"controlled": True},
        "expect": {"trapped": True},
        "topology": "interior region r > 0.3 of one chart; singularity excised",
    },
    "c1-model": {
        "id": "c1-model",
        "description": "Metric with a |x1|^1.5 component (C1, not C^{1,1}): regularization, "
                       "surrogate energy condition and branching funnel.",
        "metric": {"name": "c1-model", "params": {}},
        "checks": ["regularization", "nec", "branching"],
        "eps": [0.2, 0.1, 0.05, 0.025],
        "K": {"lower": [-0.5, -1, -0.5, -0.5], "upper": [0.5, 1, 0.5, 0.5]},
        "nec": {"deltas": [0.05, 0.1, 0.2], "delta": 0.1, "c1": 0.5, "c2": 2.0},
        "branching": {"point": [0, 0, 0, 0], "direction": [1, 1, 0, 0]},
        "topology": "single chart",
    },
    "schwarzschild-exterior": {
        "id": "schwarzschild-exterior",
        "description": "Schwarzschild (m=1) exterior in (t, r, theta, phi): maximizers "
                       "versus shooting geodesics and the r=4 sphere.",
        "metric": {"name": "schwarzschild", "params": {"m": 1.0}},
        "slice": {"t0": 0.0},
        "surface": {"kind": "level", "axis": 0, "value": 4.0,
                    "theta": [0.6, 2.5], "phi": [-3.0, 3.0]},
        "checks": ["trapped", "focusing", "maximizer"],
        "b": 1.0,
        "b_grid": [1.0, 2.0, 4.0, 8.0],
        "maximizer": {"pairs": [[[0, 10, 1.5707963267948966, 0], [20, 10, 1.5707963267948966, 0.5]],
                                [[0, 8, 1.5707963267948966, 0], [15, 12, 1.5707963267948966, 0.3]],
                                [[0, 12, 1.2, 0.1], [18, 9, 1.4, 0.6]]],
                      "segments": [8, 16, 32], "hausdorff_tol": 1e-2},
        "topology": "exterior chart r > 2.1m",
    },
}


@dataclass
class Diagnostic:
    level: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.field}: {self.message}"


@dataclass
class ScenarioConfig:
    id: str
    metric: dict
    description: str = ""
    slice: dict = field(default_factory=lambda: {"t0": 0.0})
    surface: Optional[dict] = None
    checks: List[str] = field(default_factory=list)
    eps: List[float] = field(default_factory=list)
    K: Optional[dict] = None
    delta: float = 0.1
    b: float = 1.0
    b_grid: List[float] = field(default_factory=list)
    c_hint: Optional[float] = None
    grid: Optional[dict] = None
    samples: dict = field(default_factory=dict)
    nec: dict = field(default_factory=dict)
    branching: dict = field(default_factory=dict)
    maximizer: dict = field(default_factory=dict)
    broken: dict = field(default_factory=dict)
    eps_compare: dict = field(default_factory=dict)
    compactness: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    topology: str = ""
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        diags = [d for d in validate(data) if d.level == "error"]
        if diags:
            raise InvalidInputError("; ".join(str(d) for d in diags))
        return cls(**copy.deepcopy(data))

    def sample_count(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))


def load_config(source) -> dict:
    """Built-in scenario name, YAML file path or mapping -> config mapping."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    if str(source) in BUILTIN_SCENARIOS:
        return copy.deepcopy(BUILTIN_SCENARIOS[str(source)])
    path = Path(source)
    if not path.exists():
        raise InvalidInputError(f"no built-in scenario or file named {str(source)!r}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidInputError("a scenario file must contain a mapping")
    return data


def list_scenarios() -> List[tuple]:
    return [(name, cfg["description"]) for name, cfg in BUILTIN_SCENARIOS.items()]


# -- validation --------------------------------------------------------------


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _vector(x, n=None) -> bool:
    return isinstance(x, (list, tuple)) and all(_is_number(v) for v in x) and (n is None or len(x) == n)


def _metric_dim(metric: dict) -> Optional[int]:
    if "components" in metric:
        return len(metric.get("coords", []))
    params = metric.get("params") or {}
    if "dim" in params:
        return int(params["dim"])
    if "lower" in params:
        return len(params["lower"])
    return 4


def validate(data: dict) -> List[Diagnostic]:
    """Static checks of a config mapping; no numerics are run."""
    out: List[Diagnostic] = []

    def err(f, m):
        out.append(Diagnostic("error", f, m))

    def warn(f, m):
        out.append(Diagnostic("warning", f, m))

    if not isinstance(data, dict):
        return [Diagnostic("error", "<root>", "config must be a mapping")]
    for k in data:
        if k not in _KEYS:
            err(k, "unknown key")
    if not isinstance(data.get("id"), str) or not data.get("id"):
        err("id", "a non-empty scenario id is required")
    metric = data.get("metric")
    dim = None
    if not isinstance(metric, dict):
        err("metric", "a metric mapping is required")
    elif "components" in metric:
        coords = metric.get("coords")
        if not isinstance(coords, list) or len(coords) < 3 or not all(isinstance(c, str) for c in coords):
            err("metric.coords", "list of at least 3 coordinate names required")
        else:
            dim = len(coords)
            for key in ("lower", "upper"):
                if not _vector(metric.get(key), dim):
                    err(f"metric.{key}", f"vector of {dim} numbers required")
            if metric.get("regularity", "C1") not in ("smooth", "C11", "C1", "C0"):
                err("metric.regularity", "must be one of smooth, C11, C1, C0")
            params = metric.get("params") or {}
            comps = metric.get("components")
            if not isinstance(comps, dict) or not comps:
                err("metric.components", "mapping gij -> expression required")
            else:
                for name, text in comps.items():
                    if not (isinstance(name, str) and len(name) == 3 and name[0] == "g"
                            and name[1:].isdigit() and max(int(name[1]), int(name[2])) < dim):
                        err(f"metric.components.{name}", f"expected g<i><j> with indices < {dim}")
                        continue
                    try:
                        compile_expression(str(text), coords, params)
                    except InvalidInputError as exc:
                        err(f"metric.components.{name}", str(exc))
    else:
        name = metric.get("name")
        if name not in BUILTIN_METRICS:
            err("metric.name", f"unknown metric {name!r}; known: {sorted(BUILTIN_METRICS)}")
        elif metric.get("params") is not None and not isinstance(metric.get("params"), dict):
            err("metric.params", "must be a mapping")
        else:
            dim = _metric_dim(metric)
    checks = data.get("checks", [])
    if not isinstance(checks, list):
        err("checks", "must be a list")
        checks = []
    for c in checks:
        if c not in CHECKS:
            err("checks", f"unknown check {c!r}; known: {list(CHECKS)}")
    if set(checks) & _NEEDS_SURFACE:
        surf = data.get("surface")
        if not isinstance(surf, dict):
            err("surface", "required by the requested checks")
        elif surf.get("kind") not in ("sphere", "plane", "level"):
            err("surface.kind", "must be sphere, plane or level")
        elif surf["kind"] == "sphere" and not (_is_number(surf.get("radius")) and surf["radius"] > 0):
            err("surface.radius", "positive radius required")
    eps = data.get("eps", [])
    if set(checks) & _NEEDS_EPS or eps:
        if not _vector(eps) or not eps:
            err("eps", "non-empty list of numbers required")
        elif any(e <= 0 for e in eps):
            err("eps", "all eps must be positive")
        elif any(b >= a for a, b in zip(eps, eps[1:])):
            err("eps", "eps list must be strictly decreasing")
    if set(checks) & _NEEDS_EPS:
        K = data.get("K")
        if not (isinstance(K, dict) and _vector(K.get("lower"), dim) and _vector(K.get("upper"), dim)):
            err("K", f"box with lower/upper vectors of length {dim} required")
    delta = data.get("delta", 0.1)
    if not (_is_number(delta) and 0 < delta < 1):
        err("delta", "must lie in (0, 1)")
    b = data.get("b", 1.0)
    if not (_is_number(b) and b > 0):
        err("b", "must be positive")
    bg = data.get("b_grid", [])
    if not _vector(bg) or any(x <= 0 for x in bg):
        err("b_grid", "list of positive numbers required")
    c_hint = data.get("c_hint")
    if c_hint is not None:
        if not _is_number(c_hint):
            err("c_hint", "must be a number")
        elif c_hint > 0 and _is_number(b) and b <= 1.0 / c_hint:
            warn("b", f"b = {b:g} <= 1/c = {1.0 / c_hint:g}: the focusing inequality cannot "
                      "predict a focal point at this b (admissibility needs b > 1/c)")
    if "causal" in checks or "compactness" in checks:
        grid = data.get("grid")
        if not (isinstance(grid, dict) and _vector(grid.get("lower"), dim)
                and _vector(grid.get("upper"), dim)):
            err("grid", f"box with lower/upper vectors of length {dim} required")
        elif not (isinstance(grid.get("n", 32), int) and grid.get("n", 32) >= 4):
            err("grid.n", "integer >= 4 required")
    seed = data.get("seed", 0)
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        err("seed", "unsigned 64-bit integer required")
    if "nec" in checks:
        nec = data.get("nec") or {}
        ds = nec.get("deltas", [0.05, 0.1, 0.2])
        if not _vector(ds) or any(d <= 0 for d in ds):
            err("nec.deltas", "positive numbers required")
        if not (_is_number(nec.get("c1", 0.5)) and _is_number(nec.get("c2", 2.0))
                and 0 < nec.get("c1", 0.5) < nec.get("c2", 2.0)):
            err("nec.c1", "need 0 < c1 < c2")
    if "maximizer" in checks:
        pairs = (data.get("maximizer") or {}).get("pairs")
        if not isinstance(pairs, list) or not pairs or not all(
                isinstance(p, list) and len(p) == 2 and _vector(p[0], dim) and _vector(p[1], dim)
                for p in pairs):
            err("maximizer.pairs", "list of [p, q] point pairs required")
    if "branching" in checks:
        br = data.get("branching") or {}
        if not (_vector(br.get("point"), dim) and _vector(br.get("direction"), dim)):
            err("branching", "point and direction vectors required")
    if "broken" in checks:
        bk = data.get("broken") or {}
        if not all(_vector(bk.get(k), dim) for k in ("p", "v", "w")):
            err("broken", "p, v and w vectors required")
    return out


# -- builders ----------------------------------------------------------------


def build_metric(cfg: ScenarioConfig) -> MetricField:
    m = cfg.metric
    if "components" not in m:
        return builtin_metric(m["name"], **(m.get("params") or {}))
    coords = list(m["coords"])
    n = len(coords)
    params = dict(m.get("params") or {})
    comps = {}
    for name, text in m["components"].items():
        i, j = int(name[1]), int(name[2])
        comps[(min(i, j), max(i, j))] = compile_expression(str(text), coords, params)

    def components(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (n, n))
        for (i, j), f in comps.items():
            g[..., i, j] = f(x)
            g[..., j, i] = g[..., i, j]
        return g

    return MetricField(name=cfg.id, dim=n, lower=m["lower"], upper=m["upper"],
                       components=components, regularity=m.get("regularity", "C1"),
                       params=params)


def build_surfaces(cfg: ScenarioConfig, dim: int):
    Sigma = flat_slice(dim - 1, float(cfg.slice.get("t0", 0.0)))
    s = cfg.surface
    if s is None:
        return Sigma, None
    if s["kind"] == "sphere":
        S = round_sphere(float(s["radius"]), s.get("center", [0.0] * (dim - 1)))
    elif s["kind"] == "plane":
        S = plane(s["normal"], float(s.get("offset", 0.0)), s.get("center"),
                  float(s.get("scale", 1.0)))
    else:
        axis, value = int(s["axis"]), float(s["value"])
        th = s.get("theta", [0.5, 2.6])
        ph = s.get("phi", [-3.0, 3.0])

        def seeds(count):
            k = max(int(math.ceil(math.sqrt(count))), 1)
            a, b = np.meshgrid(np.linspace(th[0], th[1], k), np.linspace(ph[0], ph[1], k),
                               indexing="ij")
            pts = np.zeros((k * k, dim - 1))
            others = [i for i in range(dim - 1) if i != axis]
            pts[:, axis] = value
            pts[:, others[0]] = a.ravel()
            pts[:, others[1]] = b.ravel()
            return pts[:count]

        S = coordinate_level(axis, value, dim - 1, seeds=seeds)
    return Sigma, S


# -- pipeline -----------------------------------------------------------------


@dataclass
class RunResult:
    summary: dict
    exit_code: int
    files: List[str]


class _Run:
    def __init__(self, cfg: ScenarioConfig, out_dir: Optional[Path], grid_n: Optional[int]):
        self.cfg = cfg
        self.out_dir = out_dir
        self.grid_n = grid_n
        self.extra = {"scenario": cfg.id, "version": __version__}
        self.files: List[str] = []
        self.assertions: List[dict] = []
        self.summary: dict = {}
        self.state: dict = {}
        self.field = build_metric(cfg)
        self.Sigma, self.S = build_surfaces(cfg, self.field.dim)

    # output helpers
    def write(self, name: str, text: str):
        self.files.append(name)
        if self.out_dir is not None:
            with open(self.out_dir / name, "w", newline="") as fh:
                fh.write(text)

    def write_json(self, name: str, data: dict):
        doc = dict(self.extra)
        doc.update(data)
        self.write(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")

    def check(self, name: str, passed: bool, detail: str = ""):
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})

    # shared state
    def surface_points(self) -> np.ndarray:
        if "ys" not in self.state:
            self.state["ys"] = sample_surface(self.Sigma, self.S, self.cfg.sample_count("surface", 16))
        return self.state["ys"]

    def family(self):
        if "family" not in self.state:
            K = (self.cfg.K["lower"], self.cfg.K["upper"])
            self.state["family"] = regularize(self.field, self.cfg.eps, K, seed=self.cfg.seed)
        return self.state["family"]

    def c_min(self) -> float:
        if "trapped" not in self.state:
            self.run_trapped()
        return normalized_convergence(self.state["trapped"].min_k_minus, self.field.dim)

    def grid_spec(self) -> GridSpec:
        g = self.cfg.grid
        n = int(self.grid_n or g.get("n", 32))
        return GridSpec.aligned(g["lower"], g["upper"], (n,) * self.field.dim,
                                float(self.cfg.slice.get("t0", 0.0)))

    # checks
    def run_trapped(self):
        rep = inner_trapped_test(self.field, self.Sigma, self.S,
                                 n_samples=self.cfg.sample_count("trapped", 32))
        self.state["trapped"] = rep
        self.write("trapped.json", rep.to_json(self.extra) + "\n")
        c = normalized_convergence(rep.min_k_minus, self.field.dim)
        self.summary["trapped"] = {"verdict": rep.verdict, "min_k_minus": rep.min_k_minus,
                                   "c_min": c}
        if "trapped" in self.cfg.expect:
            want = bool(self.cfg.expect["trapped"])
            self.check("trapped_verdict", (rep.verdict == "trapped") == want,
                       f"verdict {rep.verdict}, expected trapped={want}")

    def run_focusing(self):
        fld, n = self.field, self.field.dim
        b = float(self.cfg.b)
        b_grid = list(self.cfg.b_grid) or [b]
        b_max = max(b_grid + [b])
        reports, bounds = [], []
        for i, y in enumerate(self.surface_points()):
            nm = build_normals(fld, self.Sigma, self.S, y)
            _, km = convergence_pair(fld, self.Sigma, self.S, y)
            gamma = integrate_geodesic(fld, nm.point, nm.K_minus, (0.0, b_max))
            reports.append(focusing_functional(fld, gamma, km, b, geodesic_id=str(i)))
            bounds.append(maximizing_bound(fld, lambda _b, g=gamma: g, km, b_grid))
        self.write("focusing.csv", reports_csv(reports, self.extra))
        mech = [r for r in reports if r.c > 2 and r.min_ric >= -3.0 * (n - 2)]
        if mech:
            ok = all(r.verdict == "focal_point_predicted" for r in mech)
            self.check("focusing_mechanism", ok,
                       f"{sum(r.verdict == 'focal_point_predicted' for r in mech)}/{len(mech)} "
                       f"generators with c > 2 predicted at b = {b:g}")
        self.state["focusing"] = reports
        self.summary["focusing"] = {
            "b": b, "n_generators": len(reports),
            "predicted": sum(r.verdict == "focal_point_predicted" for r in reports),
            "verdicts": [r.verdict for r in reports],
            "c_min": min(r.c for r in reports), "c_max": max(r.c for r in reports),
            "maximizing_bound": [None if math.isinf(x) else x for x in bounds],
            "truncated": sum(r.truncated for r in reports)}

    def run_causal(self):
        spec = self.grid_spec()
        ys = sample_surface(self.Sigma, self.S, self.cfg.sample_count("source", 4000))
        cloud = np.concatenate([self.Sigma.time(ys)[:, None], ys], axis=1)
        grid = future_sets(self.field, cloud, spec)
        J, I, E = grid.J_plus, grid.I_plus, grid.E_plus
        self.check("I_subset_J", bool(np.all(~I | J)), f"{int(np.sum(I & ~J))} I+ cells outside J+")
        self.check("E_is_J_minus_I", bool(np.array_equal(E, J & ~I)),
                   f"{int(E.sum())} E+ cells, {int(np.sum(E != (J & ~I)))} mismatched")
        if (self.cfg.grid or {}).get("export"):
            if self.out_dir is not None:
                export_masks(grid, self.out_dir / "grid")
            self.files += ["grid.masks.bin", "grid.masks.json"]
        gens = {}
        rows = ["scenario,version,direction,generator,cut_at,reason," +
                ",".join(f"x{k}" for k in range(self.field.dim))]
        for d in ("K_minus", "K_plus"):
            gens[d] = boundary_generators(self.field, grid, self.Sigma, self.S, d,
                                          n_samples=self.cfg.sample_count("surface", 16))
            for g in gens[d]:
                rows.append(",".join([self.cfg.id, __version__, d, str(g.meta["generator"]),
                                      repr(float(g.meta["cut_at"])), g.meta["reason"]]
                                     + [repr(float(v)) for v in g.points[-1]]))
        self.write("generators.csv", "\n".join(rows) + "\n")
        self.state["grid"], self.state["generators"] = grid, gens
        cuts = [g.meta["cut_at"] for g in gens["K_minus"]]
        self.summary["causal"] = {
            "shape": list(spec.shape), "cells_J": int(J.sum()), "cells_I": int(I.sum()),
            "cells_E": int(E.sum()), "K_minus_cut_min": min(cuts), "K_minus_cut_max": max(cuts),
            "K_minus_reasons": sorted(set(g.meta["reason"] for g in gens["K_minus"])),
            "K_plus_reasons": sorted(set(g.meta["reason"] for g in gens["K_plus"]))}
        c = self.c_min()
        if c > 2:
            b = float(self.cfg.b)
            self.check("generators_cut_before_b", max(cuts) < b,
                       f"latest K_- cut at {max(cuts):.4g} with c_min = {c:.4g} > 2")

    def run_compactness(self):
        if "generators" not in self.state:
            self.run_causal()
        c = self.c_min()
        if c <= 0:
            self.check("compactness_probe", False, "S is not inner trapped; probe not applicable")
            return
        gens = self.state["generators"]["K_minus"]
        # the bundle range 2/c uses the trace min k_- itself, not its per-direction mean
        c = self.state["trapped"].min_k_minus
        full = compactness_probe(self.field, self.Sigma, self.S, c, gens, b=1.0)
        out = {"full": json.loads(full.to_json())}
        self.check("compactness_probe", full.passed, full.message)
        if self.cfg.compactness.get("controlled", False):
            half = compactness_probe(self.field, self.Sigma, self.S, c, gens, b=1.0,
                                     lambda_factor=1.0)
            out["halved"] = json.loads(half.to_json())
            if self.cfg.expect.get("controlled_failure"):
                self.check("compactness_controlled_failure", not half.passed,
                           "halved bundle " + ("passed unexpectedly" if half.passed else
                                               "fails: " + half.message))
            self.summary["compactness_halved"] = half.passed
        self.write_json("compactness.json", out)
        self.summary["compactness"] = full.passed

    def run_eps_compare(self):
        fam = self.family()
        opts = self.cfg.eps_compare
        grid = self.grid_spec() if opts.get("masks") and self.cfg.grid else None
        y = self.surface_points()[0]
        rep = eps_maximizer_compare(fam, self.Sigma, self.S, y, T=float(opts.get("T", 1.0)),
                                    delta=float(self.cfg.delta), grid=grid)
        cols = ["scenario", "version", "eps", "sup_distance", "window", "exists_until", "truncated"]
        if grid is not None:
            cols.append("in_E_fraction")
        lines = [",".join(cols)]
        for r in rep.rows:
            row = dict(self.extra, **r)
            lines.append(",".join(str(row[k]) if isinstance(row[k], (str, bool)) else repr(row[k])
                                  for k in cols))
        self.write("eps_compare.csv", "\n".join(lines) + "\n")
        self.check("eps_limit", rep.passed,
                   f"distance ratio first/last = {rep.factor:.3g}, decreasing = {rep.decreasing}")
        self.summary["eps_compare"] = {"factor": rep.factor, "decreasing": rep.decreasing,
                                       "window": rep.rows[0]["window"],
                                       "truncated": any(r["truncated"] for r in rep.rows)}

    def run_regularization(self):
        fam = self.family()
        rows = convergence_report(fam)
        self.write("regularization.csv", report_csv(rows, self.extra))
        self.check("cone_nesting", all(fam.nesting_ok(e) for e in fam.eps_list),
                   f"{len(fam.verify_points)} points, c_corr = {fam.c_corr:g}")
        ratios = [r["ratio_narrow"] for r in rows]
        spread = max(ratios) / min(ratios) - 1.0
        self.check("correction_ratio_constant", spread <= 0.05,
                   f"sup |narrow - mollified| / eps spread {spread:.2e} across the sweep")
        self.check("c1_error_monotone", all(r["c1_monotone"] for r in rows),
                   "C1 sup-error of the mollification decreases along the sweep")
        self.summary["regularization"] = {"c_corr": fam.c_corr, "doublings": fam.doublings,
                                          "c1_factor4": all(r["c1_factor4"] for r in rows)}

    def run_nec(self):
        fam = self.family()
        opts = self.cfg.nec
        deltas = list(opts.get("deltas", [0.05, 0.1, 0.2]))
        K = (self.cfg.K["lower"], self.cfg.K["upper"])
        reps = nec_threshold_sweep(fam.narrow, fam.eps_list, deltas, K,
                                   float(opts.get("c1", 0.5)), float(opts.get("c2", 2.0)))
        self.write("nec.csv", nec_csv(reps, self.extra))
        table = {repr(float(d)): measured_eps0(reps, d) for d in deltas}
        main = float(opts.get("delta", 0.1))
        small = sorted(fam.eps_list)[:2]
        ok_main = all(r.passed for r in reps if r.delta == main and r.eps in small)
        self.check("eps0_exists", ok_main and measured_eps0(reps, main) is not None,
                   f"delta = {main:g}: eps0 = {measured_eps0(reps, main)}")
        vals = [measured_eps0(reps, d) or 0.0 for d in sorted(deltas)]
        self.check("eps0_monotone_in_delta", all(b >= a for a, b in zip(vals, vals[1:])),
                   f"eps0 by delta: {table}")
        self.summary["eps0"] = table

    def run_branching(self):
        opts = self.cfg.branching
        rep = branching_probe(self.field, opts["point"], opts["direction"])
        self.write("funnel.csv", funnel_csv(rep, self.extra))
        self.summary["branching"] = {"flagged": rep.flagged, "growth": rep.growth,
                                     "message": rep.message}

    def run_maximizer(self):
        opts = self.cfg.maximizer
        segs = list(opts.get("segments", [8, 16, 32]))
        tol = float(opts.get("hausdorff_tol", 1e-2))
        lines = ["scenario,version,pair,n_segments,length,residual,hausdorff,feasible"]
        worst_h, ratios = 0.0, []
        for k, (p, q) in enumerate(opts["pairs"]):
            sh = shoot_connect(self.field, p, q, seed=self.cfg.seed)
            ref = sh.dense(np.linspace(0.0, 1.0, 4001))[0]
            res = []
            for n in segs:
                r = maximizer_search(self.field, p, q, n)
                h = hausdorff(r.curve.points, ref)
                res.append(r.residual)
                lines.append(",".join([self.cfg.id, __version__, str(k), str(n), repr(r.length),
                                       repr(r.residual), repr(h), str(r.feasible)]))
            worst_h = max(worst_h, h)
            ratios += [b / a for a, b in zip(res, res[1:])]
        self.write("maximizer.csv", "\n".join(lines) + "\n")
        self.check("maximizer_near_geodesic", worst_h <= tol,
                   f"worst Hausdorff distance at {segs[-1]} segments = {worst_h:.3g}")
        self.check("residual_halves", all(0.35 <= r <= 0.65 for r in ratios),
                   "residual ratios " + ", ".join(f"{r:.3f}" for r in ratios))
        self.summary["maximizer"] = {"worst_hausdorff": worst_h, "residual_ratios": ratios}

    def run_broken(self):
        opts = self.cfg.broken
        fld = self.field
        br = broken_geodesic(fld, opts["p"], opts["v"], opts["w"])
        L = br.length(fld)
        s = float(opts.get("s", 0.01))
        var = break_variation(fld, br, [s])[0]
        if "expected_length" in opts:
            self.check("broken_length", abs(L - float(opts["expected_length"])) <= 1e-6,
                       f"L = {L!r}")
        self.check("variation_lengthens", var["length"] > L,
                   f"L(c_s) = {var['length']!r} at s = {s:g}")
        rng = np.random.default_rng(self.cfg.seed)
        derivs = []
        while len(derivs) < int(opts.get("random", 5)):
            a, b = rng.uniform(-0.6, 0.6, (2, fld.dim - 1))
            v = np.concatenate([[1.0], a])
            w = np.concatenate([[1.0], b])
            try:
                cand = broken_geodesic(fld, opts["p"], v, w)
                derivs.append(length_derivative(fld, cand))
            except InvalidInputError:
                continue
        self.check("length_derivative_positive", all(d > 0 for d in derivs),
                   "dL/ds at 0: " + ", ".join(f"{d:.4g}" for d in derivs))
        lines = ["scenario,version,kind,value"]
        lines += [f"{self.cfg.id},{__version__},length,{L!r}",
                  f"{self.cfg.id},{__version__},varied_length,{var['length']!r}"]
        lines += [f"{self.cfg.id},{__version__},dL_ds,{d!r}" for d in derivs]
        self.write("broken.csv", "\n".join(lines) + "\n")
        self.summary["broken"] = {"length": L, "varied_length": var["length"], "dL_ds": derivs}

    def verdict(self) -> str:
        tr = self.summary.get("trapped")
        if tr is None:
            return "no trapped-surface checks requested"
        if tr["verdict"] != "trapped":
            return "no contradiction mechanism (S is not inner trapped)"
        if tr["c_min"] <= 2:
            return "no contradiction mechanism (not trapped strongly enough for c>2 branch)"
        if self.summary.get("compactness") is False:
            return "c>2 branch reached but the compactness probe failed"
        return ("contradiction mechanism active: every K_- generator focuses before b = 1 "
                "and the horizon is covered by a bounded bundle")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run_scenario(config, out_dir=None, seed: Optional[int] = None,
                 grid: Optional[int] = None) -> RunResult:
    """Run every requested check and write the tables plus ``summary.json``.

    Exit code 0 means every assertion passed, 1 that some failed and 2 that
    the configuration was invalid or a module raised an error; in that case
    ``error.json`` holds the structured error report.
    """
    data = load_config(config)
    if seed is not None:
        data["seed"] = int(seed)
    if out_dir is None and isinstance(data, dict) and data.get("out"):
        out_dir = data["out"]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    sid = data.get("id", "?") if isinstance(data, dict) else "?"
    try:
        cfg = ScenarioConfig.from_dict(data)
        run = _Run(cfg, out, grid)
        for name in CHECKS:
            if name in cfg.checks:
                getattr(run, f"run_{name}")()
    except (C1LabError, ValueError, np.linalg.LinAlgError) as exc:
        err = {"scenario": sid, "version": __version__, "error": type(exc).__name__,
               "message": str(exc)}
        if out is not None:
            with open(out / "error.json", "w") as fh:
                fh.write(json.dumps(err, indent=2, sort_keys=True) + "\n")
        return RunResult(summary=err, exit_code=2, files=["error.json"])
    passed = all(a["passed"] for a in run.assertions)
    summary = {"scenario": cfg.id, "version": __version__, "seed": cfg.seed,
               "checks": [c for c in CHECKS if c in cfg.checks], "verdict": run.verdict(),
               "assertions": run.assertions, "passed": passed, "outputs": sorted(run.files),
               "topology": cfg.topology}
    summary.update(run.summary)
    summary = _jsonable(summary)
    if out is not None:
        with open(out / "summary.json", "w") as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(summary=summary, exit_code=0 if passed else 1,
                     files=sorted(run.files) + ["summary.json"])
