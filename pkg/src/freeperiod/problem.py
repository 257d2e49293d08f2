"""Concrete problem objects built from a resolved configuration, and the hypothesis checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import homology as hom
from . import linking as lk
from . import potential as pot
from .errors import ConfigError, FreePeriodError, LinkingError
from .polynomial import Polynomial


@dataclass
class Problem:
    spec: pot.PotentialSpec
    chart: geo.MetricChart
    bbox: tuple
    config: dict

    @property
    def name(self):
        return self.spec.builtin_tag or "polynomial"

    @property
    def periodic(self) -> bool:
        return self.chart.family == geo.FLAT_TORUS

    def grid_resolution(self, grid_n) -> float:
        lo, hi = self.bbox
        return float(np.max((np.asarray(hi) - np.asarray(lo)) / grid_n))

    def cycle(self, delta) -> lk.CycleSpec:
        c = self.config["linking"]["cycle"]
        if c == "builtin":
            if self.spec.builtin_tag is None:
                raise ConfigError("polynomial potentials need a polyline or mesh cycle")
            if self.spec.builtin_tag == "cosine2d":
                return _cosine_cycle(self.spec, delta)
            return lk.builtin_cycle(self.spec.builtin_tag, delta, self.spec.energy)
        if "polyline" in c:
            return lk.polyline_cycle(c["polyline"])
        return lk.mesh_cycle(c["mesh"])


def _cosine_cycle(spec, delta):
    L = np.asarray(spec.params["periods"], dtype=float)
    level = 1.0 - spec.energy - 2.0 * delta
    if not -1.0 < level < 1.0:
        raise LinkingError("cosine2d: no disk cycle reaches {U <= -2 delta} at this energy")
    radius = float(np.max(np.arccos(level) * L / (2.0 * np.pi)))
    if np.any(radius >= 0.5 * L):
        raise LinkingError("cosine2d: disk cycle does not fit in the fundamental domain")
    return lk.CycleSpec(2, lambda s: lk._concentric_disk(s, radius), "disk", 2)


def _builtin_bbox(spec):
    n, E = spec.dimension, spec.energy
    if spec.builtin_tag == "harmonic2d":
        h = 2.0 * np.sqrt(max(E, 1e-12))
    elif spec.builtin_tag == "well1d":
        h = 2.0 * np.sqrt(max(E, 1e-12))
    elif spec.builtin_tag == "annulus2d":
        h = 1.5 * np.sqrt((5.0 + np.sqrt(max(9.0 + 16.0 * E, 0.0))) / 2.0)
    else:
        return None
    return ([-h] * n, [h] * n)


def _auto_bbox(spec):
    """Box of 1.5 times the largest sampled radius where U > 0."""
    dirs = pot._sphere_directions(spec.dimension, 64)
    o = np.asarray(spec.base_point, dtype=float)
    radii = np.geomspace(1e-3, 1e4, 400)
    Q = o + radii[:, None, None] * dirs[None]
    U = pot.eval_U(spec, Q)
    pos = np.any(U > 0, axis=1)
    if not np.any(pos):
        raise ConfigError("cannot infer a bounding box: U <= 0 on all sampled rays; set homology.bbox")
    if pos[-1]:
        raise ConfigError("cannot infer a bounding box: negative set looks unbounded; set homology.bbox")
    R = 1.5 * radii[np.flatnonzero(pos)[-1] + 1]
    return (list(o - R), list(o + R))


def build_problem(cfg: dict) -> Problem:
    prob = cfg["problem"]
    potd = prob["potential"]
    E = prob["energy"]
    try:
        if "builtin" in potd:
            name = potd["builtin"]
            if name not in pot.BUILTINS:
                raise ConfigError(f"unknown builtin potential {name!r} "
                                  f"(choose from {sorted(pot.BUILTINS)})")
            kw = dict(potd.get("params") or {})
            if E is not None:
                kw["energy"] = float(E)
            spec = pot.BUILTINS[name](**kw)
        else:
            dim = prob["dimension"]
            if dim is None:
                keys = list(potd["polynomial"])
                if not keys:
                    raise ConfigError("polynomial potential has no coefficients")
                dim = len(str(keys[0]).split(","))
            spec = pot.polynomial(potd["polynomial"], int(dim), float(E or 0.0))
    except TypeError as exc:
        raise ConfigError(f"bad potential parameters: {exc}") from exc
    if prob["dimension"] is not None and int(prob["dimension"]) != spec.dimension:
        raise ConfigError(f"problem.dimension {prob['dimension']} does not match the potential "
                          f"({spec.dimension})")
    chart = _build_chart(prob["metric"], spec)
    bbox = cfg["homology"]["bbox"]
    if bbox is None:
        if chart.family == geo.FLAT_TORUS:
            bbox = ([0.0] * spec.dimension, [float(p) for p in chart.periods])
        else:
            bbox = _builtin_bbox(spec) or _auto_bbox(spec)
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bbox)
    if lo.size != spec.dimension or hi.size != spec.dimension or np.any(hi <= lo):
        raise ConfigError("homology.bbox must be [[lo...], [hi...]] with hi > lo per axis")
    return Problem(spec, chart, (lo.tolist(), hi.tolist()), cfg)


def _build_chart(metric, spec):
    n = spec.dimension
    if "euclidean" in metric:
        return geo.MetricChart.euclidean(n)
    if "flat_torus" in metric:
        periods = (metric["flat_torus"] or {}).get("periods")
        if periods is None and spec.builtin_tag == "cosine2d":
            periods = spec.params["periods"]
        if periods is None:
            raise ConfigError("flat_torus needs periods")
        return geo.MetricChart.flat_torus(tuple(float(p) for p in periods))
    phi = (metric["conformal2d"] or {}).get("phi")
    if phi is None:
        raise ConfigError("conformal2d needs a polynomial phi")
    return geo.MetricChart.conformal2d(
        geo.ConformalFactor.from_polynomial(Polynomial.from_mapping(phi, 2)))


def default_radii(problem: Problem):
    o = np.asarray(problem.spec.base_point, dtype=float)
    lo, hi = (np.asarray(b) for b in problem.bbox)
    R = max(problem.spec.compact_radius, float(np.max(np.abs(np.stack([lo, hi]) - o))))
    return [2.0 * R, 4.0 * R, 8.0 * R]


def run_checks(problem: Problem) -> pot.HypothesisReport:
    """Regularity, asymptotic sampling, bounded geometry and (LNK) by cubical homology."""
    cfg = problem.config
    spec, chart, bbox = problem.spec, problem.chart, problem.bbox
    grid_n = int(cfg["homology"]["grid_n"])
    report = pot.check_reg(spec, chart, bbox, grid_n)
    if problem.periodic:
        report.notes.append("compact configuration space: asymptotic conditions are vacuous")
        report.ac2_consistent = True
    else:
        radii = cfg["checks"]["radii"] or default_radii(problem)
        report = report.merge(pot.check_asymptotic(spec, chart, radii,
                                                   int(cfg["checks"]["samples_per_shell"])))
    report.geometry = geo.check_bounded_geometry(chart, bbox).to_dict()
    if report.reg_ok:
        delta = cfg["homology"]["delta"]
        try:
            if delta is None:
                u = pot.eval_U(spec, pot.grid_points(pot.grid_axes(chart, bbox, grid_n)))
                iso = pot.isotopy_threshold(spec, chart, bbox, grid_n)
                delta = min(0.5 * iso, 0.05 * float(np.max(u)))
            pair = hom.build_cubical_pair(spec, chart, float(delta), bbox, grid_n)
            betti = hom.relative_betti_mod2(pair)
            report.lnk_betti = [int(b) for b in betti]
            report.lnk_ok = hom.check_lnk(betti)
        except FreePeriodError as exc:
            report.lnk_ok = False
            report.notes.append(str(exc))
    else:
        report.lnk_ok = False
        report.notes.append("homology skipped: regularity failed")
    return report
