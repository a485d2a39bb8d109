import math

import numpy as np
import pytest

from c1lab import metrics
from c1lab.errors import InvalidInputError, RegularityError
from c1lab.focusing import (delta_threshold, focusing_functional, maximizing_bound,
                            normalized_convergence, reports_csv)
from c1lab.geodesics import integrate_geodesic
from c1lab.surfaces import build_normals, convergence_pair, round_sphere, sample_surface


def _generator(field_, Sigma, S, y, t_end):
    nm = build_normals(field_, Sigma, S, y)
    _, km = convergence_pair(field_, Sigma, S, y)
    return integrate_geodesic(field_, nm.point, nm.K_minus, (0.0, t_end)), km


class TestThreshold:
    def test_exact_value(self):
        assert delta_threshold(1, 2, 4) == 6

    @pytest.mark.parametrize("b,c", [(0.5, 2.0), (1.0, 0.0), (1.0, -1.0)])
    def test_inadmissible(self, b, c):
        with pytest.raises(InvalidInputError):
            delta_threshold(b, c, 4)

    def test_normalization(self):
        assert normalized_convergence(1.0, 4) == 0.5


class TestMinkowskiSphere:
    @pytest.fixture
    def setup(self, mink, slice0, sphere2):
        y = sample_surface(slice0, sphere2, 4)[0]
        return _generator(mink, slice0, sphere2, y, 5.0)

    @pytest.mark.parametrize("b,want", [(1.99, "inconclusive"), (2.01, "focal_point_predicted")])
    def test_flip_at_inverse_convergence(self, mink, setup, b, want):
        gamma, km = setup
        rep = focusing_functional(mink, gamma, km, b)
        assert rep.c == pytest.approx(0.5, rel=1e-6)
        assert rep.verdict == want
        assert rep.lhs == pytest.approx(2 / b, rel=1e-10)

    def test_maximizing_bound(self, mink, setup):
        gamma, km = setup
        assert maximizing_bound(mink, lambda b: gamma, km, [1.0, 1.5, 2.0, 2.5, 3.0]) == 2.0
        assert maximizing_bound(mink, lambda b: gamma, km, [1.0, 1.5]) == math.inf

    def test_custom_profile(self, mink, setup):
        # f = cos(pi t / 2b): lhs = 2 pi^2 / (8 b), flips at b = pi^2 / (8 c)
        gamma, km = setup
        b_star = math.pi**2 / 4

        def prof(b):
            return (lambda t: np.cos(np.pi * t / (2 * b)),
                    lambda t: -np.pi / (2 * b) * np.sin(np.pi * t / (2 * b)))

        lo = focusing_functional(mink, gamma, km, b_star - 0.01, profile=prof(b_star - 0.01))
        hi = focusing_functional(mink, gamma, km, b_star + 0.01, profile=prof(b_star + 0.01))
        assert lo.verdict == "inconclusive" and hi.verdict == "focal_point_predicted"
        assert hi.profile == "custom"

    def test_delta_threshold_reported(self, mink, setup):
        gamma, km = setup
        rep = focusing_functional(mink, gamma, km, 3.0)
        assert rep.delta_threshold == pytest.approx(3 / 9 * 2 * (1.5 - 1))
        assert focusing_functional(mink, gamma, km, 1.0).delta_threshold is None


class TestCurved:
    def test_pg_generator_focuses_before_one(self, pg, slice0):
        S = round_sphere(1.0)
        y = sample_surface(slice0, S, 8)[5]
        gamma, km = _generator(pg, slice0, S, y, 1.0)
        rep = focusing_functional(pg, gamma, km, 1.0)
        assert rep.c == pytest.approx(1 + math.sqrt(2), rel=1e-6)
        assert rep.verdict == "focal_point_predicted"
        assert rep.truncated  # the generator reaches the excised core first
        assert rep.exists_until < 1.0

    def test_vacuum_ricci_term_vanishes(self, schw, slice0):
        from c1lab.surfaces import coordinate_level
        S = coordinate_level(0, 6.0, seeds=lambda n: np.tile([6.0, 1.3, 0.2], (n, 1)))
        gamma, km = _generator(schw, slice0, S, [6.0, 1.3, 0.2], 1.0)
        rep = focusing_functional(schw, gamma, km, 1.0)
        assert rep.lhs == pytest.approx(2.0, abs=1e-5)
        assert abs(rep.min_ric) < 1e-5

    def test_negative_ricci_raises_lhs(self):
        f = metrics.nec_violating()
        x0 = np.array([0.0, 0.0, 0.0, 0.0])
        gamma = integrate_geodesic(f, x0, [1, 0, 1, 0], (0.0, 1.0))
        rep = focusing_functional(f, gamma, 1.0, 1.0)
        # Ric(g', g') = -(1 + t^2) along t -> x2, weight (1-t)^2
        want = 2.0 + (1 / 3 + 1 / 30)
        assert rep.lhs == pytest.approx(want, rel=1e-5)
        # nodes stop short of t = 1
        assert rep.min_ric == pytest.approx(-2.0, rel=1e-3)


class TestErrors:
    def test_non_null(self, mink):
        g = integrate_geodesic(mink, np.zeros(4), [1, 0.5, 0, 0], (0.0, 2.0))
        with pytest.raises(InvalidInputError):
            focusing_functional(mink, g, 1.0, 1.0)

    def test_bad_b(self, mink):
        g = integrate_geodesic(mink, np.zeros(4), [1, 1, 0, 0], (0.0, 2.0))
        with pytest.raises(InvalidInputError):
            focusing_functional(mink, g, 1.0, 0.0)

    def test_raw_c1_refused(self):
        f = metrics.c1_model()
        g = integrate_geodesic(f, np.zeros(4), [1, 0, 1, 0], (0.0, 1.0))
        with pytest.raises(RegularityError):
            focusing_functional(f, g, 1.0, 1.0)


def test_reports_csv(mink):
    g = integrate_geodesic(mink, np.zeros(4), [1, 1, 0, 0], (0.0, 3.0))
    reps = [focusing_functional(mink, g, 1.0, b, geodesic_id=str(b)) for b in (1.0, 3.0)]
    lines = reports_csv(reps, {"scenario": "m", "version": "0"}).strip().splitlines()
    assert lines[0].startswith("scenario,version,geodesic_id,c,b,lhs,rhs")
    assert lines[1].endswith("inconclusive") and lines[2].endswith("focal_point_predicted")
