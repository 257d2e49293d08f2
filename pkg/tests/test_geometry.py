import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeperiod import geometry as geo
from freeperiod.errors import DomainError, GeometryError

from conftest import linear_phi

coords = st.floats(-3, 3, allow_nan=False)


def test_metric_eval_flat_and_conformal():
    assert np.array_equal(geo.metric_eval(geo.MetricChart.euclidean(2), [3.0, 4.0]), np.eye(2))
    flat_conf = geo.MetricChart.conformal2d(geo.ConformalFactor.constant(0.0))
    assert np.allclose(geo.metric_eval(flat_conf, [1.0, 1.0]), np.eye(2))
    g = geo.metric_eval(linear_phi(), [1.0, 0.0])
    assert np.allclose(g, np.exp(2.0) * np.eye(2), rtol=1e-14)


def test_metric_eval_rejects_nonfinite():
    with pytest.raises(DomainError):
        geo.metric_eval(geo.MetricChart.euclidean(2), [np.nan, 0.0])
    with pytest.raises(DomainError):
        geo.metric_eval(geo.MetricChart.euclidean(2), [1.0, 2.0, 3.0])


def test_chart_validation():
    with pytest.raises(GeometryError):
        geo.MetricChart.flat_torus((1.0, -1.0))
    with pytest.raises(GeometryError):
        geo.MetricChart(3, geo.CONFORMAL_2D, conformal=geo.ConformalFactor.constant(0.0))
    with pytest.raises(GeometryError):
        geo.MetricChart(2, "hyperbolic")


def test_christoffel_examples():
    assert not np.any(geo.christoffel(geo.MetricChart.euclidean(3), [1.0, 2.0, 3.0]))
    const = geo.MetricChart.conformal2d(geo.ConformalFactor.constant(0.7))
    assert not np.any(geo.christoffel(const, [0.3, -0.2]))
    G = geo.christoffel(linear_phi(), [0.4, -1.3])
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 1.0
    expected[0, 1, 1] = -1.0
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0
    assert np.array_equal(G, expected)


def test_covariant_accel_examples():
    v, a = np.array([0.3, -2.0]), np.array([1.0, 5.0])
    assert np.array_equal(geo.covariant_accel(geo.MetricChart.euclidean(2), [1.0, 1.0], v, a), a)
    torus = geo.MetricChart.flat_torus((1.0, 2.0))
    assert np.array_equal(geo.covariant_accel(torus, [0.5, 0.5], v, a), a)
    out = geo.covariant_accel(linear_phi(), [0.0, 0.0], [0.0, 1.0], [0.0, 0.0])
    assert np.allclose(out, [-1.0, 0.0])


def test_metric_gradient_examples():
    assert np.array_equal(geo.metric_gradient(geo.MetricChart.euclidean(2), [0, 0], [1.0, 2.0]),
                          [1.0, 2.0])
    conf = geo.MetricChart.conformal2d(geo.ConformalFactor.constant(np.log(2.0)))
    assert np.allclose(geo.metric_gradient(conf, [0.5, 0.5], [4.0, 0.0]), [1.0, 0.0])
    torus = geo.MetricChart.flat_torus((1.0, 1.0))
    assert np.array_equal(geo.metric_gradient(torus, [0.2, 0.1], [0.0, 0.0]), [0.0, 0.0])


def test_metric_gradient_singular():
    conf = geo.MetricChart.conformal2d(geo.ConformalFactor.constant(-400.0))
    with pytest.raises(GeometryError):
        geo.metric_gradient(conf, [0.0, 0.0], [1.0, 0.0])


def test_bounded_geometry_reports():
    r = geo.check_bounded_geometry(geo.MetricChart.euclidean(2), ([-1, -1], [1, 1]))
    assert r.inj == np.inf and r.curvature_bound == 0 and r.certified
    r = geo.check_bounded_geometry(geo.MetricChart.flat_torus((2.0, 3.0)), ([0, 0], [2, 3]))
    assert r.inj == 1.0 and r.curvature_bound == 0 and r.certified
    flat = geo.MetricChart.conformal2d(geo.ConformalFactor.constant(0.0))
    r = geo.check_bounded_geometry(flat, ([-1, -1], [1, 1]))
    assert r.curvature_bound == 0 and not r.certified and "sampled" in r.note
    assert r.to_dict()["inj"] is None


def test_bounded_geometry_curved():
    from freeperiod.polynomial import Polynomial
    # phi = (x^2 + y^2) / 2 gives K = -2 exp(-2 phi), |K| <= 2 with the max at the origin
    poly = Polynomial.from_mapping({"2,0": 0.5, "0,2": 0.5}, 2)
    chart = geo.MetricChart.conformal2d(geo.ConformalFactor.from_polynomial(poly))
    r = geo.check_bounded_geometry(chart, ([-1, -1], [1, 1]), grid_n=33)
    assert r.curvature_bound == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.tuples(coords, coords), st.tuples(coords, coords))
def test_christoffel_symmetric(q, c):
    chart = linear_phi(c=(c[0] / 3, c[1] / 3))
    G = geo.christoffel(chart, q)
    assert np.array_equal(G, np.swapaxes(G, -1, -2))


@settings(max_examples=50, deadline=None)
@given(st.tuples(coords, coords), st.tuples(coords, coords))
def test_metric_derivative_matches_phi(q, c):
    chart = linear_phi(c=(c[0] / 3, c[1] / 3))
    q = np.asarray(q)
    h = 1e-4
    dphi = chart.conformal.grad(q)
    g = geo.metric_eval(chart, q)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (geo.metric_eval(chart, q + e) - geo.metric_eval(chart, q - e)) / (2 * h)
        exact = 2.0 * dphi[i] * g
        assert np.max(np.abs(fd - exact)) <= 10 * h * h * max(1.0, np.max(np.abs(g)))


@settings(max_examples=50, deadline=None)
@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords))
def test_metric_gradient_inverts_metric(q, c, dU):
    chart = linear_phi(c=(c[0] / 3, c[1] / 3))
    grad = geo.metric_gradient(chart, q, dU)
    back = geo.metric_eval(chart, q) @ grad
    assert np.allclose(back, dU, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(dU))))
