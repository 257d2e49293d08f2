"""End-to-end acceptance checks; one test per criterion.

The three builtin problems are solved once per session through the command
line, single-threaded, into a temporary directory.
"""
import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from freeperiod import action as act
from freeperiod import config as cf
from freeperiod import geometry as geo
from freeperiod import homology as hom
from freeperiod import loops as lp
from freeperiod import potential as pot
from freeperiod import problem as pb
from freeperiod import solver as sv

from conftest import problem

pytestmark = pytest.mark.slow

BUILTINS = ("harmonic2d", "well1d", "annulus2d")


def cli(*args, cwd=None):
    cmd = [sys.executable, "-m", "freeperiod.cli", "--threads", "1", "--log-level", "WARNING",
           *args]
    start = time.perf_counter()
    out = subprocess.run(cmd, capture_output=True, text=True, cwd=cwd)
    return out, time.perf_counter() - start


class Run:
    def __init__(self, root, name, tag=""):
        self.dir = root / f"{name}{tag}"
        self.dir.mkdir()
        self.orbit = self.dir / "orbit.csv"
        self.summary_path = self.dir / "summary.json"
        self.config = self.dir / "config.json"
        # relative output paths keep the resolved config identical across directories
        self.config.write_text(json.dumps({
            "problem": {"potential": {"builtin": name}},
            "discretization": {"modes": 32, "samples": 256},
            "output": {"orbit_csv": "orbit.csv", "summary_json": "summary.json"},
        }))
        self.proc, self.elapsed = cli("solve", "--config", "config.json", cwd=self.dir)

    @property
    def summary(self):
        return json.loads(self.summary_path.read_text())

    def samples(self):
        with open(self.orbit, newline="") as fh:
            rows = list(csv.reader(fh))
        return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("solves")
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = Run(root, name)
            assert cache[name].proc.returncode == 0, cache[name].proc.stderr[-2000:]
        return cache[name]
    get.root = root
    return get


@pytest.mark.criterion(1, "harmonic disk: T, radius and c within 1e-3 of analytic; < 60 s")
def test_harmonic_disk(runs):
    r = runs("harmonic2d")
    s = r.summary
    header, data = r.samples()
    q = data[:, 1:3]
    print(f"harmonic2d: T={s['T']:.9f} c={s['c']:.9f} elapsed={r.elapsed:.1f}s")
    assert abs(s["T"] - 2 * np.pi) <= 1e-3
    assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0)) <= 1e-3
    assert abs(s["c"] - 2 * np.pi) <= 1e-3
    assert r.elapsed < 60.0


@pytest.mark.criterion(2, "1D well: T within 1e-3 of sqrt(2) pi, turning points within 1e-3 of +-1")
def test_well(runs):
    r = runs("well1d")
    s = r.summary
    _, data = r.samples()
    q = data[:, 1]
    print(f"well1d: T={s['T']:.9f} turning points {q.min():.9f} {q.max():.9f}")
    assert abs(s["T"] - np.sqrt(2) * np.pi) <= 1e-3
    assert abs(q.max() - 1.0) <= 1e-3 and abs(q.min() + 1.0) <= 1e-3


@pytest.mark.criterion(3, "annulus: certificates under thresholds; < 5 min")
def test_annulus(runs):
    r = runs("annulus2d")
    s = r.summary
    cert = s["certificates"]
    spec, chart, box = problem("annulus2d")
    Q = pot.grid_points(pot.grid_axes(chart, pb.build_problem(
        cf.resolve({"problem": {"potential": {"builtin": "annulus2d"}}})).bbox, 64))
    inside = pot.eval_U(spec, Q) > 0
    max_grad = float(np.max(pot.grad_norm(spec, chart, Q[inside])))
    _, data = r.samples()
    print(f"annulus2d: T={s['T']:.9f} {cert} elapsed={r.elapsed:.1f}s")
    assert cert["el_resid_sup"] <= 1e-6 * max_grad
    assert cert["energy_ident_sup"] <= 1e-6
    assert cert["shooting_closure"] <= 1e-4
    assert np.min(pot.eval_U(spec, data[:, 1:3])) >= -1e-6
    assert r.elapsed < 300.0


@pytest.mark.criterion(4, "critical-value identities: gaps <= 100 tol_newton at every stage")
def test_critical_value_identities(runs):
    worst = 0.0
    for name in BUILTINS:
        s = runs(name).summary
        tol = s["config"]["solver"]["tol_newton"]
        assert len(s["iterations"]["stages"]) >= 2
        for st in s["iterations"]["stages"]:
            worst = max(worst, st["gap_U"], st["gap_E"])
            assert st["gap_U"] <= 100 * tol and st["gap_E"] <= 100 * tol, (name, st)
    print(f"largest gap {worst:.3g}")


@pytest.mark.criterion(5, "penalty bound: min of 2e^-t + e^(t/2)/2 is 3/2 at t = 2 ln 2")
def test_penalty_bound():
    f = lambda t: 2 * np.exp(-t) + 0.5 * np.exp(0.5 * t)
    res = minimize_scalar(f, bracket=(0.0, 1.0, 3.0), tol=1e-12)
    assert abs(res.fun - 1.5) <= 1e-8
    assert abs(res.x - 2 * np.log(2)) <= 1e-6


def _directional_error(p, spec, chart, eps, d, h=1e-4):
    """Relative error of the five-point (fourth-order) difference quotient."""
    ev = act.evaluate(p, spec, chart, eps)
    z = p.vector()
    f = lambda t: act.action_value(p.from_vector(z + t * d), spec, chart, eps)
    fd = (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h)
    exact = lp.h1_inner(ev.xi, d[:-1].reshape(p.loop.coeffs.shape)) + ev.dtau * d[-1]
    return abs(fd - exact) / abs(exact)


@pytest.mark.criterion(6, "gradient consistency: 100 points x 20 directions, rel. error <= 1e-6")
def test_gradient_consistency():
    rng = np.random.default_rng(6)
    worst = 0.0
    names = list(BUILTINS)
    for i in range(100):
        spec, chart, _ = problem(names[i % 3])
        K = 6
        c = rng.normal(size=(2 * K + 1, spec.dimension)) * np.exp(-0.6 * lp.mode_numbers(K))[:, None]
        p = act.ActionPoint(lp.FourierLoop(c, 64), float(rng.uniform(-1, 1)))
        eps = float(rng.choice([0.0, 0.1]))
        for _ in range(20):
            d = rng.normal(size=c.size + 1)
            worst = max(worst, _directional_error(p, spec, chart, eps, d))
    print(f"largest relative error {worst:.3g}")
    assert worst <= 1e-6


@pytest.mark.criterion(7, "homology: interval, disk, annulus, two disks; grid doubling invariant")
def test_homology_oracle():
    euclid = geo.MetricChart.euclidean
    two = pot.polynomial({"4,0": 1.0, "2,0": -2.0, "0,0": 1.0, "0,2": 1.0}, 2, energy=0.2)
    cases = [
        (pot.well1d(), euclid(1), 0.1, ([-2.0], [2.0]), [0, 1]),
        (pot.harmonic2d(), euclid(2), 0.1, ([-2.0, -2.0], [2.0, 2.0]), [0, 0, 1]),
        (pot.annulus2d(), euclid(2), 0.05, ([-3.0, -3.0], [3.0, 3.0]), [0, 1, 1]),
        (two, euclid(2), 0.02, ([-2.0, -1.5], [2.0, 1.5]), [0, 0, 2]),
    ]
    for spec, chart, delta, box, expected in cases:
        for n in (64, 128):
            betti = hom.relative_betti_mod2(hom.build_cubical_pair(spec, chart, delta, box, n))
            assert betti == expected, (spec.builtin_tag, n, betti)


@pytest.mark.criterion(8, "linking: sup over frozen nodes < barrier floor <= family max")
def test_linking_invariants():
    for name in BUILTINS:
        cfg = cf.resolve({"problem": {"potential": {"builtin": name}}})
        prob = pb.build_problem(cfg)
        params, fam, eps0 = sv.prepare_family(cfg, prob)
        v = fam.values(prob.spec, prob.chart, eps0)
        floor = 2 * np.sqrt(params.r * params.delta)
        print(f"{name}: frozen sup {v[fam.frozen].max():.6g} < floor {floor:.6g} "
              f"<= max {v.max():.6g}")
        assert v[fam.frozen].max() < floor <= v.max()


def _without_timing(text):
    doc = json.loads(text)
    doc.pop("timing")
    return json.dumps(doc, sort_keys=True)


@pytest.mark.criterion(9, "determinism: identical summaries (timing excluded) from two solves")
def test_determinism(runs):
    first = runs("well1d")
    second = Run(runs.root, "well1d", "-again")
    assert second.proc.returncode == 0
    a, b = first.summary_path.read_text(), second.summary_path.read_text()
    assert _without_timing(a) == _without_timing(b)
    assert first.config.read_bytes() == second.config.read_bytes()
    assert first.orbit.read_bytes() == second.orbit.read_bytes()


@pytest.mark.criterion(10, "round trip: verify exits 0 on every solve output")
def test_round_trip(runs):
    for name in BUILTINS:
        r = runs(name)
        out, _ = cli("verify", "--config", "config.json", cwd=r.dir)
        print(f"{name}: {out.stdout.strip()}")
        assert out.returncode == 0, out.stdout + out.stderr
