import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeperiod import linking as lk
from freeperiod import loops as lp
from freeperiod import potential as pot
from freeperiod.errors import LinkingError

from conftest import problem


def prepared(name, n_s=5, n_sigma=(4, 8, 4), K=16, M=128):
    spec, chart, box = problem(name)
    p0 = lk.select_parameters(spec, chart, box, 256)
    cycle = lk.builtin_cycle(name, p0.delta)
    rho = 2 * (box[1][0] - box[0][0]) / 64
    push = lk.push_cycle(cycle, spec, chart, p0.delta, rho, n_s=n_s, K=K, M=M)
    E_max = max(lp.energy(lp.FourierLoop(c, M), chart) for c in push.terminal)
    params = lk.select_parameters(spec, chart, box, 256, cycle=cycle, energy_max=E_max,
                                  delta=p0.delta)
    return spec, chart, box, cycle, push, params


@pytest.fixture(scope="module")
def well():
    return prepared("well1d")


def test_select_parameters_formulas(well):
    spec, chart, box, cycle, push, p = well
    assert p.barrier_floor == pytest.approx(2 * np.sqrt(p.r * p.delta))
    assert p.r == pytest.approx(0.4 * p.qb_distance ** 2)
    assert p.delta == pytest.approx(0.05)
    assert p.tau0 <= -2 and p.tau1 >= 2
    cmax = float(np.max(pot.eval_U(spec, cycle(lk.parameter_grid(1, 33)[0]))))
    assert np.exp(p.tau0) * cmax <= 0.5 * p.barrier_floor * (1 + 1e-12)


def test_select_parameters_harmonic():
    spec, chart, box, cycle, push, p = prepared("harmonic2d", n_s=3)
    assert p.tau0 <= -2
    assert np.exp(p.tau0) * 1.0 < p.barrier_floor


def test_negative_set_empty():
    spec = pot.polynomial({"0,0": 1.0}, 2, energy=0.0)
    with pytest.raises(LinkingError, match="negative set empty"):
        lk.select_parameters(spec, problem("harmonic2d")[1], ([-1, -1], [1, 1]), 64)


def test_push_reaches_target(well):
    spec, chart, box, cycle, push, p = well
    for c in push.terminal:
        assert lp.potential_integral(lp.FourierLoop(c, push.M), spec) <= -0.5 * p.delta + 1e-12


def test_push_keeps_boundary(well):
    spec, chart, box, cycle, push, p = well
    first, last = 0, len(push.history[0]) - 1
    for j in (first, last):
        for step in push.history:
            assert np.array_equal(step[j], push.history[0][j])


def test_push_harmonic_disk():
    spec, chart, box, cycle, push, p = prepared("harmonic2d", n_s=4)
    vals = [lp.potential_integral(lp.FourierLoop(c, push.M), spec) for c in push.terminal]
    assert max(vals) <= -0.5 * p.delta + 1e-12


def test_push_needs_positive_rho(well):
    spec, chart, box, cycle, push, p = well
    with pytest.raises(LinkingError):
        lk.push_cycle(cycle, spec, chart, p.delta, 0.0)


def test_family_invariants(well):
    spec, chart, box, cycle, push, p = well
    fam = lk.build_family(cycle, spec, chart, p, push, n_sigma=(4, 8, 4))
    v = fam.values(spec, chart, 0.0)
    assert v[fam.frozen].max() < p.barrier_floor <= v.max()
    assert fam.K1 == p.barrier_floor and fam.K2 == pytest.approx(v.max())
    # boundary of the parameter cube is frozen
    assert fam.frozen[0].all() and fam.frozen[-1].all()
    assert fam.frozen[:, 0].all() and fam.frozen[:, -1].all()
    assert not fam.frozen[1:-1, 1:-1].any()
    d = json.loads(fam.to_json())
    assert d["shape"] == list(fam.shape)


def test_family_sigma_lines_cross_barrier(well):
    spec, chart, box, cycle, push, p = well
    fam = lk.build_family(cycle, spec, chart, p, push, n_sigma=(4, 8, 4))
    E = fam.energies(chart)
    for i in np.flatnonzero(fam.start_in_qb):
        assert E[i, 0] < p.r < E[i].max()


def test_family_rejects_bad_tau0(well):
    spec, chart, box, cycle, push, p = well
    import copy
    bad = copy.copy(p)
    bad.tau0 = 0.0
    with pytest.raises(LinkingError, match="linking not established"):
        lk.build_family(cycle, spec, chart, bad, push, n_sigma=(4, 8, 4))


def test_validate_cycle():
    spec = pot.well1d()
    good = lk.builtin_cycle("well1d", 0.05)
    lk.validate_cycle(good, spec, 0.05)
    short = lk.polyline_cycle([[-0.5], [0.5]])
    with pytest.raises(LinkingError, match="boundary"):
        lk.validate_cycle(short, spec, 0.05)
    outside = lk.polyline_cycle([[1.2], [3.0]])
    with pytest.raises(LinkingError):
        lk.validate_cycle(outside, spec, 0.05)


def test_user_cycles():
    seg = lk.polyline_cycle([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    assert np.allclose(seg(np.array([[0.0], [0.5], [1.0]])), [[0, 0], [1, 0], [1, 1]])
    mesh = lk.mesh_cycle(np.array([[[0, 0], [0, 1]], [[1, 0], [1, 1]]], dtype=float))
    assert np.allclose(mesh(np.array([0.25, 0.75])), [0.25, 0.75])
    with pytest.raises(LinkingError):
        lk.polyline_cycle([[0.0]])
    with pytest.raises(LinkingError):
        lk.builtin_cycle("nope", 0.1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.2), st.floats(0.2, 3.0))
def test_builtin_cycle_boundaries_below_level(delta, energy):
    for name, spec in (("well1d", pot.well1d(energy)), ("harmonic2d", pot.harmonic2d(energy)),
                       ("annulus2d", pot.annulus2d(min(energy, 0.5)))):
        cyc = lk.builtin_cycle(name, delta, spec.energy)
        S, bnd = lk.parameter_grid(cyc.degree, 17)
        assert np.all(pot.eval_U(spec, cyc(S)[bnd]) <= -2 * delta * (1 - 1e-9))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0))
def test_push_slice_interpolates(sigma):
    spec, chart, box, cycle, push, p = prepared("well1d", n_s=3, K=4, M=32)
    s = push.slice(sigma)
    lo = np.minimum.reduce(push.history)
    hi = np.maximum.reduce(push.history)
    assert np.all(s >= lo - 1e-12) and np.all(s <= hi + 1e-12)
