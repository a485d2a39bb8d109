import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c1lab import causal as cz
from c1lab import metrics
from c1lab.errors import InvalidInputError, InvalidMetricError
from c1lab.regularizer import regularize
from c1lab.surfaces import flat_slice, round_sphere


def _cone_distance(spec):
    T, X, Y, Z = np.meshgrid(*[spec.axis(k) for k in range(4)], indexing="ij")
    return T - np.sqrt(X**2 + Y**2 + Z**2)


@pytest.fixture(scope="module")
def point_grid():
    mk = metrics.minkowski(4, [-3] * 4, [3] * 4)
    spec = cz.GridSpec.aligned([0, -2, -2, -2], [2, 2, 2, 2], (16, 32, 32, 32), 0.0)
    return mk, spec, cz.future_sets(mk, np.zeros((1, 4)), spec)


@pytest.fixture(scope="module")
def sphere_setup():
    mk = metrics.minkowski(4, [-6] * 4, [6] * 4)
    spec = cz.GridSpec.aligned([0, -3, -3, -3], [3, 3, 3, 3], (24,) * 4, 0.0)
    Sig, S = flat_slice(3, 0.0), round_sphere(2.0)
    ys = cz.sample_surface(Sig, S, 4000)
    grid = cz.future_sets(mk, np.concatenate([np.zeros((len(ys), 1)), ys], 1), spec)
    return mk, Sig, S, grid


class TestGridSpec:
    def test_axes_and_cells(self):
        spec = cz.GridSpec((0, 0, 0, 0), (1, 2, 2, 2), (4, 8, 8, 8))
        assert np.allclose(spec.spacing, [0.25, 0.25, 0.25, 0.25])
        assert spec.axis(0)[0] == pytest.approx(0.125)
        assert np.array_equal(spec.cell_of([0.3, 1.99, 0.0, 0.26]), [1, 7, 0, 1])
        assert np.allclose(spec.index_coords(spec.axis(1)[3] * np.ones(4))[1], 3.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1, 1), st.integers(4, 40))
    def test_aligned_has_slice_at_t0(self, t0, n):
        spec = cz.GridSpec.aligned([-1.5, 0, 0, 0], [1.5, 1, 1, 1], (n, 4, 4, 4), t0)
        assert np.min(np.abs(spec.axis(0) - t0)) < 1e-12
        assert spec.spacing[0] == pytest.approx(3.0 / n)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**31 - 1))
    def test_small_inverse(self, m, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((5, m, m))
        a = a @ np.swapaxes(a, -1, -2) + np.eye(m)
        assert np.allclose(cz._small_inv(a) @ a, np.eye(m), atol=1e-9)


class TestFutureSets:
    def test_point_source_matches_cone(self, point_grid):
        _, spec, g = point_grid
        s = _cone_distance(spec)
        h = float(np.max(spec.spacing))
        for mask, exact in ((g.J_plus, s >= 0), (g.I_plus, s > 0)):
            bad = mask != exact
            assert not bad.any() or np.max(np.abs(s[bad])) <= 2 * h
        assert np.max(np.abs(s[g.E_plus])) <= 2 * h

    def test_mask_invariants(self, point_grid):
        _, _, g = point_grid
        assert np.all(~g.I_plus | g.J_plus)
        assert np.array_equal(g.E_plus, g.J_plus & ~g.I_plus)

    def test_push_up(self, point_grid):
        # a cell reached from J+ by a timelike step lies in I+
        _, spec, g = point_grid
        E = np.argwhere(g.E_plus[:8])
        up = E + [6, 0, 0, 0]
        assert np.all(g.I_plus[tuple(up.T)])

    def test_widening_is_monotone(self):
        spec = cz.GridSpec.aligned([0, -2, -2, -2], [1.5, 2, 2, 2], (12, 20, 20, 20), 0.0)
        box = ([-3] * 4, [3] * 4)
        base = metrics.minkowski(4, *box)
        wide = metrics.constant_metric(np.diag([-1.3, 1, 1, 1]), *box)
        src = np.zeros(spec.shape, bool)
        src[0, 9:11, 9:11, 9:11] = True
        J0 = cz.future_sets(base, src, spec).J_plus
        J1 = cz.future_sets(wide, src, spec).J_plus
        assert np.all(~J0 | J1) and J1.sum() > J0.sum()

    def test_tilted_cone_follows_shift(self):
        # g = -dt^2 + (dx - 0.5 dt)^2 + ...: the cone axis moves with velocity 0.5
        box = ([-3] * 4, [3] * 4)
        g = np.eye(4)
        g[0, 0] = -1 + 0.25
        g[0, 1] = g[1, 0] = -0.5
        f = metrics.constant_metric(g, *box)
        spec = cz.GridSpec.aligned([0, -2, -2, -2], [2, 2, 2, 2], (16, 32, 32, 32), 0.0)
        grid = cz.future_sets(f, np.zeros((1, 4)), spec)
        T, X, Y, Z = np.meshgrid(*[spec.axis(k) for k in range(4)], indexing="ij")
        s = T - np.sqrt((X - 0.5 * T) ** 2 + Y**2 + Z**2)
        bad = grid.J_plus != (s >= 0)
        assert not bad.any() or np.max(np.abs(s[bad])) <= 2 * float(np.max(spec.spacing))

    def test_errors(self, mink):
        spec = cz.GridSpec((0, -1, -1, -1), (1, 1, 1, 1), (4, 4, 4, 4))
        with pytest.raises(InvalidInputError):
            cz.future_sets(mink, np.zeros((4, 4, 4, 4), bool), spec)
        with pytest.raises(InvalidInputError):
            cz.future_sets(mink, np.ones((3, 3, 3, 3), bool), spec)
        bad = metrics.constant_metric(np.diag([1.0, -1, 1, 1]), [-2] * 4, [2] * 4)
        src = np.zeros(spec.shape, bool)
        src[0, 1, 1, 1] = True
        with pytest.raises(InvalidMetricError):
            cz.future_sets(bad, src, spec)

    def test_excision_is_blocked(self, pg):
        spec = cz.GridSpec.aligned([0, -1.5, -1.5, -1.5], [0.6, 1.5, 1.5, 1.5], (8, 16, 16, 16))
        ys = cz.sample_surface(flat_slice(3), round_sphere(1.0), 500)
        g = cz.future_sets(pg, np.concatenate([np.zeros((500, 1)), ys], 1), spec)
        T, X, Y, Z = np.meshgrid(*[spec.axis(k) for k in range(4)], indexing="ij")
        core = np.sqrt(X**2 + Y**2 + Z**2) < 0.3
        assert np.all(g.blocked[core]) and not g.J_plus[core].any()

    def test_export_roundtrip(self, point_grid, tmp_path):
        _, spec, g = point_grid
        header = cz.export_masks(g, tmp_path / "m")
        flags = np.fromfile(tmp_path / "m.masks.bin", dtype=np.uint8).reshape(header["dims"])
        assert np.array_equal((flags & 1) > 0, g.J_plus)
        assert np.array_equal((flags & 4) > 0, g.E_plus)
        assert json.loads((tmp_path / "m.masks.json").read_text())["flags"]["I_plus"] == 2


class TestGenerators:
    def test_ingoing_cut_at_centre_crossing(self, sphere_setup):
        # the ingoing cone of a radius-2 sphere closes at t = 2
        mk, Sig, S, grid = sphere_setup
        gens = cz.boundary_generators(mk, grid, Sig, S, "K_minus", n_samples=8)
        cell = grid.cell_size()
        for gen in gens:
            assert gen.meta["reason"] == "entered_I"
            assert abs(gen.meta["cut_at"] - 2.0) <= 2 * cell

    def test_outgoing_reach_grid_edge(self, sphere_setup):
        mk, Sig, S, grid = sphere_setup
        gens = cz.boundary_generators(mk, grid, Sig, S, "K_plus", n_samples=8)
        assert {g.meta["reason"] for g in gens} == {"left_grid"}

    def test_bad_direction(self, sphere_setup):
        mk, Sig, S, grid = sphere_setup
        with pytest.raises(InvalidInputError):
            cz.boundary_generators(mk, grid, Sig, S, "sideways")

    def test_compactness_and_controlled_failure(self, sphere_setup):
        mk, Sig, S, grid = sphere_setup
        gens = cz.boundary_generators(mk, grid, Sig, S, "K_minus", n_samples=8)
        ok = cz.compactness_probe(mk, Sig, S, 1.0, gens)
        assert ok.passed and ok.bounded and ok.conclusive
        half = cz.compactness_probe(mk, Sig, S, 1.0, gens, lambda_factor=1.0)
        assert not half.passed and half.violations
        assert min(v["mu"] for v in half.violations) > half.lambda_max
        assert json.loads(half.to_json({"scenario": "m"}))["n_violations"] == len(half.violations)

    def test_probe_needs_trapped_surface(self, sphere_setup):
        mk, Sig, S, grid = sphere_setup
        with pytest.raises(InvalidInputError):
            cz.compactness_probe(mk, Sig, S, 0.0, [])


class TestEpsCompare:
    def test_minkowski_closed_form(self):
        mk = metrics.minkowski(4, [-6] * 4, [6] * 4)
        eps = [0.2, 0.1, 0.05, 0.025]
        fam = regularize(mk, eps, ([-1, -3, -3, -3], [3, 3, 3, 3]), n_verify=50)
        Sig, S = flat_slice(3), round_sphere(2.0)
        y = cz.sample_surface(Sig, S, 4)[0]
        rep = cz.eps_maximizer_compare(fam, Sig, S, y, T=1.0, delta=0.1)
        # narrowed K_- = (1/sqrt(1-lam), -n): the time components drift apart linearly
        for row in rep.rows:
            lam = fam.c_corr * row["eps"]
            assert row["sup_distance"] == pytest.approx(0.9 * (1 / math.sqrt(1 - lam) - 1),
                                                        rel=1e-6)
        assert rep.decreasing and rep.factor >= 4 and rep.passed
        assert not any(r["truncated"] for r in rep.rows)

    def test_bad_delta(self):
        fam = regularize(metrics.minkowski(), [0.1], ([-1] * 4, [1] * 4), n_verify=10)
        with pytest.raises(InvalidInputError):
            cz.eps_maximizer_compare(fam, flat_slice(3), round_sphere(1.0), [1, 0, 0], 1.0, 1.0)
