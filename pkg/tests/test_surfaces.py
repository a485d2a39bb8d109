import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c1lab import metrics
from c1lab.errors import InvalidInputError
from c1lab.surfaces import (HypersurfaceData, area_variation, build_normals, convergence_pair,
                            coordinate_level, flat_slice, inner_trapped_test, plane,
                            round_sphere, sample_surface, tangent_frame)


class TestSampling:
    def test_sphere_points_on_surface(self, slice0):
        S = round_sphere(1.5, [0.2, -0.1, 0.3])
        y = sample_surface(slice0, S, 50)
        assert np.allclose(np.linalg.norm(y - [0.2, -0.1, 0.3], axis=1), 1.5, atol=1e-12)

    def test_level_needs_seeds(self, slice0):
        with pytest.raises(InvalidInputError):
            sample_surface(slice0, coordinate_level(0, 4.0), 4)

    def test_lift(self, slice0):
        assert np.allclose(flat_slice(3, 0.7).lift([1.0, 2.0, 3.0]), [0.7, 1, 2, 3])


class TestNormals:
    def test_null_future_and_normal(self, mink, slice0, sphere2):
        y = sample_surface(slice0, sphere2, 7)[3]
        nm = build_normals(mink, slice0, sphere2, y)
        g = mink.metric(nm.point)
        for K in (nm.K_plus, nm.K_minus):
            assert K @ g @ K == pytest.approx(0.0, abs=1e-12)
            assert K[0] > 0
            for e in tangent_frame(mink, slice0, sphere2, y):
                assert e @ g @ K == pytest.approx(0.0, abs=1e-10)
        assert nm.K_plus @ g @ nm.K_minus == pytest.approx(-2.0, abs=1e-12)
        # N_+ points outward
        assert np.dot(nm.N_plus[1:], y) > 0

    def test_off_surface(self, mink, slice0, sphere2):
        with pytest.raises(InvalidInputError):
            build_normals(mink, slice0, sphere2, [2.5, 0, 0])


class TestConvergence:
    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.5, 4.0), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
    def test_minkowski_round_sphere(self, r, c):
        mk = metrics.minkowski()
        Sig = flat_slice(3, 0.0)
        S = round_sphere(r, c)
        y = sample_surface(Sig, S, 5)[1]
        kp, km = convergence_pair(mk, Sig, S, y)
        assert km == pytest.approx(2 / r, rel=1e-6)
        assert kp == pytest.approx(-2 / r, rel=1e-6)

    def test_plane_has_no_convergence(self, mink, slice0):
        S = plane([1.0, 0, 0], 0.0, center=[0, 0, 0])
        y = sample_surface(slice0, S, 4)[0]
        kp, km = convergence_pair(mink, slice0, S, y)
        assert abs(kp) < 1e-8 and abs(km) < 1e-8
        assert inner_trapped_test(mink, slice0, S, 8).verdict == "not_trapped"

    @pytest.mark.parametrize("r", [0.8, 1.0, 1.5])
    def test_painleve_gullstrand_sphere(self, pg, slice0, r):
        S = round_sphere(r, [0, 0, 0])
        y = sample_surface(slice0, S, 6)[2]
        kp, km = convergence_pair(pg, slice0, S, y)
        beta = math.sqrt(2 / r)
        assert kp == pytest.approx(2 * (beta - 1) / r, rel=1e-6)
        assert km == pytest.approx(2 * (beta + 1) / r, rel=1e-6)

    def test_schwarzschild_static_sphere(self, schw, slice0):
        S = coordinate_level(0, 4.0, seeds=lambda n: np.tile([4.0, 1.2, 0.3], (n, 1)))
        kp, km = convergence_pair(schw, slice0, S, [4.0, 1.2, 0.3])
        assert km == pytest.approx(0.5 * math.sqrt(0.5), rel=1e-6)
        assert kp == pytest.approx(-km, rel=1e-6)

    def test_trapped_verdicts(self, mink, pg, slice0):
        rep = inner_trapped_test(mink, slice0, round_sphere(2.0), 16)
        assert rep.verdict == "trapped" and rep.min_k_minus == pytest.approx(1.0, rel=1e-6)
        assert '"verdict": "trapped"' in rep.to_json({"scenario": "m"})
        rep = inner_trapped_test(pg, slice0, round_sphere(1.0), 16)
        assert rep.min_k_minus == pytest.approx(2 + 2 * math.sqrt(2), rel=1e-6)

    def test_tilted_slice(self, mink):
        # boosted slice t = 0.3 x: the sphere is still inner trapped, k_- > 0
        Sig = HypersurfaceData(tau=lambda y: 0.3 * np.asarray(y)[..., 0],
                               dtau=lambda y: np.broadcast_to([0.3, 0.0, 0.0], np.shape(y)))
        rep = inner_trapped_test(mink, Sig, round_sphere(1.0), 12)
        assert rep.verdict == "trapped"


def test_area_variation_matches_convergence(mink, slice0):
    # X_s = (s, (r - s) n): Area ~ (r - s)^2, so -d log A / ds = 2 / r = k_-
    r = 2.0
    s, w = np.polynomial.legendre.leggauss(24)
    th = 0.5 * np.pi * (s + 1)
    ph = np.pi * (s + 1)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    W = np.outer(w, w).ravel() * 0.5 * np.pi * np.pi
    nodes = np.stack([TH.ravel(), PH.ravel()], -1)

    def unit(u):
        return np.stack([np.sin(u[..., 0]) * np.cos(u[..., 1]),
                         np.sin(u[..., 0]) * np.sin(u[..., 1]), np.cos(u[..., 0])], -1)

    def points(u):
        return np.concatenate([np.zeros(u.shape[:-1] + (1,)), r * unit(u)], -1)

    def k_minus(u):
        return np.concatenate([np.ones(u.shape[:-1] + (1,)), -unit(u)], -1)

    val = area_variation(mink, points, k_minus, (nodes, W))
    assert val == pytest.approx(2 / r, rel=1e-6)
