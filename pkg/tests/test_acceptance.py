"""The nine acceptance criteria at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line before asserting.
"""

import csv
import math
import time

import numpy as np
import pytest

from c1lab import causal as cz
from c1lab import metrics
from c1lab.chart_metric import MetricField
from c1lab.errors import InvalidInputError
from c1lab.curvature import christoffel, measured_eps0, nec_threshold_sweep, ricci
from c1lab.focusing import delta_threshold, focusing_functional
from c1lab.geodesics import (break_variation, broken_geodesic, integrate_geodesic,
                             length_derivative)
from c1lab.regularizer import convergence_report, regularize
from c1lab.scenario import BUILTIN_SCENARIOS, run_scenario
from c1lab.surfaces import build_normals, convergence_pair, flat_slice, round_sphere


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    cache = {}

    def get(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            cache[name] = (run_scenario(name, out_dir=out), out)
        return cache[name]
    return get


def _assertion(res, name):
    return next(a for a in res.summary["assertions"] if a["name"] == name)


def _spherical_minkowski(x):
    x = np.asarray(x, float)
    g = np.zeros(x.shape[:-1] + (4, 4))
    r, th = x[..., 1], x[..., 2]
    g[..., 0, 0], g[..., 1, 1] = -1.0, 1.0
    g[..., 2, 2], g[..., 3, 3] = r**2, (r * np.sin(th)) ** 2
    return g


def test_1_minkowski_sanity(report):
    t0 = time.perf_counter()
    mk = metrics.minkowski(4, [-4] * 4, [4] * 4)
    # flat space in spherical coordinates, derivatives by finite differences only
    fd = MetricField("minkowski-spherical", 4, [-2, 0.5, 0.3, -3], [2, 4, 2.8, 3],
                     components=_spherical_minkowski)
    pts = np.random.default_rng(1).uniform(-3, 3, (50, 4))
    gam = max(np.max(np.abs(christoffel(mk, p).gamma)) for p in pts)
    ric_a = float(np.max(np.abs(ricci(mk, pts))))
    sph = np.random.default_rng(1).uniform([-1, 1, 0.6, -2], [1, 3, 2.5, 2], (50, 4))
    ric_fd = float(np.max(np.abs(ricci(fd, sph))))
    straight = 0.0
    rng = np.random.default_rng(2)
    for _ in range(5):
        x0 = rng.uniform(-1, 1, 4)
        v0 = np.concatenate([[1.0], rng.uniform(-0.9, 0.9, 3) / math.sqrt(3)])
        c = integrate_geodesic(mk, x0, v0, (0.0, 2.0))
        straight = max(straight, float(np.max(np.abs(c.points - (x0 + np.outer(c.params, v0))))))
    spec = cz.GridSpec.aligned([0, -3, -3, -3], [3, 3, 3, 3], (64,) * 4, 0.0)
    grid = cz.future_sets(mk, np.zeros((1, 4)), spec)
    T, X, Y, Z = np.meshgrid(*[spec.axis(k) for k in range(4)], indexing="ij")
    s = T - np.sqrt(X**2 + Y**2 + Z**2)
    h = float(np.max(spec.spacing))
    worst = 0.0
    for mask, exact in ((grid.J_plus, s >= 0), (grid.I_plus, s > 0),
                        (grid.E_plus, np.abs(s) <= h)):
        bad = mask & ~exact if mask is grid.E_plus else mask != exact
        if bad.any():
            worst = max(worst, float(np.max(np.abs(s[bad]))) / h)
    elapsed = time.perf_counter() - t0
    ok = (gam <= 1e-9 and ric_a <= 1e-9 and ric_fd <= 1e-5 and straight <= 1e-8
          and worst <= 2.0 and elapsed < 60.0)
    report(1, ok, f"|Gamma| {gam:.1e}, |Ric| analytic {ric_a:.1e} / FD {ric_fd:.1e}, "
                  f"straightness {straight:.1e}, worst mask offset {worst:.2f} cells, "
                  f"{elapsed:.1f} s")


@pytest.fixture(scope="module")
def c1_family():
    cfg = BUILTIN_SCENARIOS["c1-model"]
    base = metrics.builtin_metric("c1-model")
    K = (cfg["K"]["lower"], cfg["K"]["upper"])
    return regularize(base, [0.2, 0.1, 0.05, 0.025], K, n_verify=500), K


def test_2_regularization(report, c1_family):
    fam, _ = c1_family
    rows = convergence_report(fam)
    nested = all(fam.nesting_ok(e) for e in fam.eps_list)
    ratios = [r["ratio_narrow"] for r in rows]
    spread = max(ratios) / min(ratios) - 1.0
    c1 = [r["dmoll_minus_dbase"] for r in rows]
    mono = all(b < a for a, b in zip(c1, c1[1:]))
    ok = nested and len(fam.verify_points) >= 500 and spread <= 0.05 and mono
    report(2, ok, f"nesting at {len(fam.verify_points)} points {nested}, ratio spread "
                  f"{spread:.1e}, C1 errors " + ", ".join(f"{x:.3g}" for x in c1))


def test_3_surrogate_energy(report, c1_family):
    fam, K = c1_family
    deltas = [0.05, 0.1, 0.2]
    reps = nec_threshold_sweep(fam.narrow, fam.eps_list, deltas, K, 0.5, 2.0)
    small = sorted(fam.eps_list)[:2]
    exists = (all(r.passed for r in reps if r.delta == 0.1 and r.eps in small)
              and measured_eps0(reps, 0.1) is not None)
    table = [measured_eps0(reps, d) or 0.0 for d in deltas]
    mono = all(b >= a for a, b in zip(table, table[1:]))
    report(3, exists and mono, f"eps0 by delta {dict(zip(deltas, table))}")


def test_4_broken_path(report):
    mk = metrics.minkowski(4, [-4] * 4, [4] * 4)
    p = [0, 0, 0, 0]
    br = broken_geodesic(mk, p, [1, 0.9, 0, 0], [1, -0.9, 0, 0])
    L = br.length(mk)
    Ls = break_variation(mk, br, [0.01])[0]["length"]
    rng = np.random.default_rng(4)
    derivs = []
    while len(derivs) < 5:
        a, b = rng.uniform(-0.6, 0.6, (2, 3))
        try:
            derivs.append(length_derivative(mk, broken_geodesic(mk, p, np.r_[1.0, a],
                                                                 np.r_[1.0, b])))
        except InvalidInputError:
            # draws that violate the break normalization are skipped
            continue
    ok = abs(L - 0.8718) <= 1e-4 and abs(L - 2 * math.sqrt(0.19)) <= 1e-6 and Ls > L \
        and all(d > 0 for d in derivs)
    report(4, ok, f"L = {L:.10f}, L(c_s) = {Ls:.6f}, dL/ds " + ", ".join(f"{d:.3g}" for d in derivs))


def test_5_maximizers(report, runs):
    res, _ = runs("schwarzschild-exterior")
    m = res.summary["maximizer"]
    ratios = m["residual_ratios"]
    ok = m["worst_hausdorff"] <= 1e-2 and len(ratios) == 6 and \
        all(abs(r - 0.5) <= 0.15 for r in ratios)
    report(5, ok, f"worst Hausdorff {m['worst_hausdorff']:.2e}, residual ratios "
                  + ", ".join(f"{r:.3f}" for r in ratios))


def test_6_focusing(report, runs):
    exact = delta_threshold(1, 2, 4)
    mk = metrics.minkowski(4, [-6] * 4, [6] * 4)
    Sig, S = flat_slice(3), round_sphere(2.0)
    y = np.array([2.0, 0.0, 0.0])
    nm = build_normals(mk, Sig, S, y)
    _, km = convergence_pair(mk, Sig, S, y)
    gamma = integrate_geodesic(mk, nm.point, nm.K_minus, (0.0, 2.5))
    c = km / 2
    below = focusing_functional(mk, gamma, km, 1 / c - 0.01).verdict
    above = focusing_functional(mk, gamma, km, 1 / c + 0.01).verdict
    res, out = runs("pg-trapped")
    rows = list(csv.DictReader((out / "focusing.csv").open()))
    mech = [r for r in rows if float(r["c"]) > 2 and float(r["min_ric"]) >= -6.0]
    pg_ok = bool(mech) and all(r["verdict"] == "focal_point_predicted" and float(r["b"]) <= 1.0
                               for r in mech)
    ok = exact == 6 and below == "inconclusive" and above == "focal_point_predicted" and pg_ok
    report(6, ok, f"delta(1,2,4) = {exact!r}; b = 1/c -/+ 0.01: {below} / {above}; "
                  f"pg-trapped {sum(r['verdict'] == 'focal_point_predicted' for r in mech)}"
                  f"/{len(mech)} mechanism generators predicted")


def test_7_eps_limit(report, runs):
    parts, ok = [], True
    for name in ("minkowski-sphere", "pg-trapped"):
        e = runs(name)[0].summary["eps_compare"]
        ok &= e["decreasing"] and e["factor"] >= 4
        parts.append(f"{name} factor {e['factor']:.3g}")
    report(7, ok, ", ".join(parts))


def test_8_compactness(report, runs):
    mink = runs("minkowski-sphere")[0]
    pg = runs("pg-trapped")[0]
    half = _assertion(mink, "compactness_controlled_failure")
    ok = mink.summary["compactness"] and pg.summary["compactness"] \
        and mink.summary["compactness_halved"] is False and half["passed"]
    report(8, ok, f"minkowski-sphere {mink.summary['compactness']}, pg-trapped "
                  f"{pg.summary['compactness']}, halved bundle: {half['detail']}")


def test_9_determinism(report, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_scenario("c1-model", out_dir=a, seed=1234)
    run_scenario("c1-model", out_dir=b, seed=1234)
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    report(9, same, f"{len(names)} files compared byte for byte")
