import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c1lab import metrics
from c1lab.chart_metric import (BackgroundMetric, CausalCharacter, MetricField, TangentVector,
                                causal_character, cone_compare, cone_section, eval_metric,
                                is_future_directed, null_directions, sphere_directions)
from c1lab.errors import (DomainError, InvalidInputError, InvalidMetricError,
                          RegularityError)


class TestMetricField:
    def test_minkowski_values(self, mink):
        g = eval_metric(mink, np.zeros(4))
        assert np.array_equal(g, np.diag([-1.0, 1, 1, 1]))

    def test_batched_shapes(self, schw):
        x = np.tile([0.0, 5.0, 1.0, 0.3], (2, 3, 1))
        assert schw.metric(x).shape == (2, 3, 4, 4)
        assert schw.d_metric(x).shape == (2, 3, 4, 4, 4)
        assert schw.dd_metric(x).shape == (2, 3, 4, 4, 4, 4)

    def test_outside_box(self, mink):
        with pytest.raises(DomainError):
            mink.metric([0.0, 11.0, 0.0, 0.0])

    def test_excluded_region(self, pg):
        with pytest.raises(DomainError):
            pg.metric([0.0, 0.1, 0.0, 0.0])

    def test_wrong_point_dimension(self, mink):
        with pytest.raises(InvalidInputError):
            mink.metric([0.0, 0.0, 0.0])

    @pytest.mark.parametrize("kwargs", [
        {"dim": 2, "lower": [0, 0], "upper": [1, 1]},
        {"dim": 4, "lower": [0, 0, 0, 0], "upper": [1, 1, 1, 0]},
        {"dim": 4, "lower": [0, 0, 0], "upper": [1, 1, 1]},
        {"dim": 4, "lower": [0] * 4, "upper": [1] * 4, "regularity": "C7"},
    ])
    def test_invalid_construction(self, kwargs):
        with pytest.raises(InvalidInputError):
            MetricField(name="bad", components=lambda x: x, **kwargs)

    def test_c1_field_refuses_second_derivatives(self):
        with pytest.raises(RegularityError):
            metrics.c1_model().dd_metric([0.0, 0.1, 0.0, 0.0])

    def test_fd_first_derivatives_match_analytic(self, schw):
        x = np.array([[0.0, 5.0, 1.0, 0.3], [2.0, 9.0, 2.0, -1.0]])
        fd = MetricField("fd", 4, schw.lower, schw.upper, schw.components)
        assert np.allclose(fd.d_metric(x), schw.d_metric(x), atol=1e-8)

    def test_fd_second_derivatives_of_quadratic(self):
        # g_11 = 1 + x1^2 x2: d_1 d_2 g_11 = 2 x1, d_1 d_1 g_11 = 2 x2
        def comp(x):
            g = np.zeros(x.shape[:-1] + (4, 4))
            g[..., 0, 0] = -1
            g[..., 1, 1] = 1 + x[..., 1] ** 2 * x[..., 2]
            g[..., 2, 2] = g[..., 3, 3] = 1
            return g

        f = MetricField("quad", 4, [-2] * 4, [2] * 4, comp)
        dd = f.dd_metric(np.array([0.0, 0.5, 0.7, 0.0]))
        assert dd[1, 2, 1, 1] == pytest.approx(1.0, abs=1e-6)
        assert dd[1, 1, 1, 1] == pytest.approx(1.4, abs=1e-6)

    def test_check_signature(self, mink):
        mink.check_signature(np.zeros(4))
        riem = metrics.constant_metric(np.eye(4), [-1] * 4, [1] * 4)
        with pytest.raises(InvalidMetricError):
            riem.check_signature(np.zeros(4))

    def test_pg_future_vector_is_unit_normal(self, pg):
        x = np.array([0.2, 0.6, -0.4, 0.5])
        u = pg.future_vector(x)
        assert pg.inner(x, u, u) == pytest.approx(-1.0, abs=1e-12)
        # orthogonal to the constant-t slices: g(u, d_i) = 0
        g = pg.metric(x)
        assert np.allclose((g @ u)[1:], 0.0, atol=1e-12)


class TestCausalCharacter:
    @pytest.mark.parametrize("v,want", [
        ([1, 0, 0, 0], CausalCharacter.TIMELIKE),
        ([1, 1, 0, 0], CausalCharacter.NULL),
        ([0, 1, 0, 0], CausalCharacter.SPACELIKE),
        ([1, 0.6, 0.8, 0], CausalCharacter.NULL),
    ])
    def test_minkowski(self, mink, v, want):
        assert causal_character(mink, TangentVector(np.zeros(4), v)) == want

    def test_zero_vector(self, mink):
        with pytest.raises(InvalidInputError):
            causal_character(mink, TangentVector(np.zeros(4), np.zeros(4)))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(1e-3, 1e3))
    def test_invariant_under_positive_scaling(self, v, s):
        mk = metrics.minkowski()
        v = np.asarray(v)
        if np.linalg.norm(v) < 1e-3:
            return
        a = causal_character(mk, TangentVector(np.zeros(4), v))
        b = causal_character(mk, TangentVector(np.zeros(4), s * v))
        assert a == b

    def test_background_metric_norm(self):
        h = BackgroundMetric(lambda x: np.broadcast_to(4 * np.eye(4), np.shape(x) + (4,)))
        assert h.norm(np.zeros(4), [1, 0, 0, 0]) == pytest.approx(2.0)
        assert h.distance(np.zeros(4), [0, 3, 0, 0]) == pytest.approx(6.0)

    def test_future_direction(self, mink):
        assert is_future_directed(mink, TangentVector(np.zeros(4), [1, 0.5, 0, 0]))
        assert not is_future_directed(mink, TangentVector(np.zeros(4), [-1, 0.5, 0, 0]))

    def test_pg_inside_horizon_dt_is_spacelike_but_cone_nonempty(self, pg):
        x = np.array([0.0, 0.5, 0.5, 0.0])
        g = pg.metric(x)
        assert g[0, 0] > 0
        c, A, R2 = cone_section(g)
        assert R2 > 0
        X = null_directions(g, 32)
        assert np.allclose(np.einsum("ki,ij,kj->k", X, g, X), 0.0, atol=1e-12)


class TestConeGeometry:
    def test_sphere_directions_unit(self):
        for dim in (2, 3, 5):
            s = sphere_directions(40, dim)
            assert s.shape == (40, dim)
            assert np.allclose(np.linalg.norm(s, axis=1), 1.0)

    def test_cone_compare_nested_minkowski(self):
        box = ([-1] * 4, [1] * 4)
        narrow = metrics.constant_metric(np.diag([-0.8, 1, 1, 1]), *box)
        base = metrics.minkowski(4, *box)
        assert cone_compare(narrow, base, np.zeros(4)) == "narrower"
        assert cone_compare(base, narrow, np.zeros(4)) == "not_narrower"
        assert cone_compare(base, base, np.zeros(4)) == "not_narrower"

    def test_cone_compare_needs_samples(self, mink):
        with pytest.raises(InvalidInputError):
            cone_compare(mink, mink, np.zeros(4), samples=10)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0.5, 2.0))
    def test_null_directions_are_null_and_future(self, b1, b2, a):
        g = np.diag([-1.0, a, a, 1.0])
        g[0, 1] = g[1, 0] = b1 * np.sqrt(a) * 0.9
        g[0, 2] = g[2, 0] = b2 * np.sqrt(a) * 0.3
        c, A, R2 = cone_section(g)
        if R2 <= 0:
            return
        X = null_directions(g, 16)
        q = np.einsum("ki,ij,kj->k", X, g, X)
        assert np.allclose(q, 0.0, atol=1e-10)
        assert np.all(X[:, 0] > 0)
