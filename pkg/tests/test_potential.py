import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from freeperiod import geometry as geo
from freeperiod import potential as pot
from freeperiod.errors import LinkingError, PotentialError

E2 = geo.MetricChart.euclidean(2)
E1 = geo.MetricChart.euclidean(1)
BOX2 = ([-2.0, -2.0], [2.0, 2.0])


def test_builtin_values():
    h = pot.harmonic2d()
    q = np.array([1.0, 0.0])
    assert pot.eval_U(h, q) == 0.5
    assert np.array_equal(pot.eval_gradU(h, E2, q), [-1.0, 0.0])
    assert np.array_equal(pot.eval_hessU(h, q), -np.eye(2))
    w = pot.well1d()
    assert pot.eval_U(w, [0.0]) == 1.0
    assert np.array_equal(pot.eval_gradU(w, E1, [0.0]), [0.0])
    assert np.array_equal(pot.eval_hessU(w, [0.0]), [[-2.0]])
    a = pot.annulus2d()
    assert pot.eval_U(a, [1.5, 0.0]) == pytest.approx(-0.25 * (2.25 - 1) * (2.25 - 4))
    assert pot.eval_U(a, [0.0, 1.0]) == 0.0 and pot.eval_U(a, [2.0, 0.0]) == 0.0


def test_value_at_base_point():
    spec = pot.polynomial({"0,0": -0.25, "2,0": 1.0, "0,2": 1.0}, 2, energy=1.0)
    assert pot.eval_U(spec, spec.base_point) == pytest.approx(1.25)


def test_provider_failure_is_wrapped():
    bad = pot.PotentialSpec(1, U=lambda q: 1 / 0, gradU=lambda q: q, hessU=lambda q: q)
    with pytest.raises(PotentialError, match="provider"):
        pot.eval_U(bad, [0.0])


def test_check_reg_examples():
    rep = pot.check_reg(pot.harmonic2d(), E2, BOX2, 64, tol_grad=0.1)
    assert rep.reg_ok
    assert rep.reg_min_grad == pytest.approx(np.sqrt(2.0), abs=5e-3)
    one = pot.polynomial({"0,0": 0.0}, 2, energy=1.0)
    rep = pot.check_reg(one, E2, BOX2, 64)
    assert rep.reg_ok is False and "zero level empty in box" in rep.notes
    degenerate = pot.polynomial({"2": 1.0}, 1, energy=0.0)
    assert pot.check_reg(degenerate, E1, ([-1.0], [1.0]), 64).reg_ok is False
    with pytest.raises(PotentialError):
        pot.check_reg(pot.harmonic2d(), E2, BOX2, 4)


def test_check_asymptotic_examples():
    rep = pot.check_asymptotic(pot.harmonic2d(), E2, [4, 8, 16])
    assert np.allclose([v for _, v in rep.ac2_trend], [1 / 4, 1 / 8, 1 / 16], rtol=0, atol=1e-10)
    assert rep.ac2_consistent
    rep = pot.check_asymptotic(pot.well1d(), E1, [4, 8])
    assert np.allclose([v for _, v in rep.ac2_trend], [0.25, 0.125], atol=1e-12)
    lin = pot.polynomial({"1,0": 1.0}, 2)
    rep = pot.check_asymptotic(lin, E2, [2, 4, 8])
    assert [v for _, v in rep.ac2_trend] == [0.0, 0.0, 0.0]
    with pytest.raises(PotentialError):
        pot.check_asymptotic(pot.harmonic2d(), E2, [8, 4])


def test_qb_function_examples():
    h = pot.harmonic2d()
    assert pot.qb_function(h, E2, [0.0, 0.0]) == 1.0
    assert pot.qb_function(h, E2, [np.sqrt(2.0), 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert pot.qb_function(pot.well1d(), E1, [0.0]) == 1.0


def test_qb_distance_matches_root_finding():
    delta = 0.1
    q_level = np.sqrt(1.0 - delta)
    q_qb = brentq(lambda q: (1 - q * q) / np.sqrt(1 + 4 * q * q) - np.sqrt(2) * delta, 0.0, 1.0)
    d = pot.estimate_qb_distance(pot.well1d(), E1, delta, ([-2.0], [2.0]), 512)
    assert d > 0
    assert d == pytest.approx(q_level - q_qb, abs=4.0 / 512)


def test_qb_distance_positive_for_small_delta():
    d = pot.estimate_qb_distance(pot.harmonic2d(), E2, 0.05, BOX2, 256)
    assert 0 < d < 0.1


def test_qb_distance_errors():
    one = pot.polynomial({"0,0": 0.0}, 2, energy=1.0)
    with pytest.raises(LinkingError, match="no zero level"):
        pot.estimate_qb_distance(one, E2, 0.1, BOX2, 64)
    with pytest.raises(LinkingError, match="delta too large"):
        pot.estimate_qb_distance(pot.harmonic2d(), E2, 5.0, BOX2, 64)


BUILTIN_SPECS = [(pot.harmonic2d(), 2), (pot.well1d(), 1), (pot.annulus2d(), 2),
                 (pot.cosine2d(), 2)]


@pytest.mark.parametrize("spec,n", BUILTIN_SPECS)
def test_derivatives_consistent(spec, n, rng):
    Q = rng.uniform(-2.5, 2.5, size=(1000, n))
    h = 1e-4
    g = pot.eval_dU(spec, Q)
    H = pot.eval_hessU(spec, Q)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd_g = (pot.eval_U(spec, Q + e) - pot.eval_U(spec, Q - e)) / (2 * h)
        fd_h = (pot.eval_dU(spec, Q + e) - pot.eval_dU(spec, Q - e)) / (2 * h)
        scale = 1.0 + np.max(np.abs(H))
        assert np.max(np.abs(fd_g - g[:, i])) <= 100 * h * h * scale
        assert np.max(np.abs(fd_h - H[:, :, i])) <= 100 * h * h * scale


def test_polynomial_derivatives(rng):
    spec = pot.polynomial({"4,0": 0.25, "2,2": -0.5, "0,3": 0.3, "1,0": 1.0}, 2, energy=2.0)
    Q = rng.uniform(-1.5, 1.5, size=(200, 2))
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (pot.eval_U(spec, Q + e) - pot.eval_U(spec, Q - e)) / (2 * h)
        assert np.allclose(fd, pot.eval_dU(spec, Q)[:, i], atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.sampled_from(["harmonic2d", "annulus2d", "cosine2d"]))
def test_qb_function_sign_and_size(x, y, name):
    spec = pot.BUILTINS[name]()
    q = np.array([x, y])
    f = pot.qb_function(spec, E2, q)
    u = pot.eval_U(spec, q)
    assert np.sign(f) == np.sign(u)
    assert abs(f) <= abs(u)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(2.0, 100.0), min_size=2, max_size=5, unique=True))
def test_harmonic_ratio_is_inverse_radius(radii):
    radii = sorted(radii)
    rep = pot.check_asymptotic(pot.harmonic2d(), E2, radii, samples_per_shell=16)
    for r, v in rep.ac2_trend:
        assert v == pytest.approx(1.0 / r, abs=1e-10)
    assert all(b > a for a, b in zip([r for r, _ in rep.ac2_trend], [r for r, _ in rep.ac2_trend][1:]))
