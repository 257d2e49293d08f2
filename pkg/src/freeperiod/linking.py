"""Minimax geometry: barrier parameters, the pushed cycle and the sweeping family.

The family is a grid of action points indexed by cycle parameters s in
[0,1]^k and a sweep parameter sigma in [0,1].  Nodes on the boundary of
[0,1]^k x [0,1] form the low-action set and are frozen; every family that
keeps them fixed has to cross the barrier {E = r, x(0) in Q_B} where the
action is at least 2 sqrt(r delta).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import action as act
from . import geometry as geo
from . import loops as lp
from . import potential as pot
from .errors import LinkingError

log = logging.getLogger(__name__)


# -- cycles --------------------------------------------------------------------

@dataclass
class CycleSpec:
    """Parametric relative cycle: ``map`` sends points of [0,1]^degree to configuration space."""

    degree: int
    map: Callable
    source: str = "user"
    dimension: int = 1

    def __call__(self, s):
        return np.asarray(self.map(np.asarray(s, dtype=float)), dtype=float)


def _concentric_disk(s, radius):
    """Square-to-disk map sending the boundary of [0,1]^2 onto the circle of ``radius``."""
    a = 2.0 * s[..., 0] - 1.0
    b = 2.0 * s[..., 1] - 1.0
    r = np.where(np.abs(a) > np.abs(b), a, b)
    safe_a = np.where(a == 0, 1.0, a)
    safe_b = np.where(b == 0, 1.0, b)
    phi = np.where(np.abs(a) > np.abs(b), 0.25 * np.pi * b / safe_a,
                   0.5 * np.pi - 0.25 * np.pi * a / safe_b)
    phi = np.where((a == 0) & (b == 0), 0.0, phi)
    return radius * np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def builtin_cycle(name: str, delta: float, energy: float = None) -> CycleSpec:
    """Relative cycles whose boundary lies in {U <= -2 delta}."""
    if name == "well1d":
        E = 1.0 if energy is None else energy
        a = np.sqrt(E + 2.0 * delta)
        return CycleSpec(1, lambda s: (-a + 2.0 * a * s[..., :1]), "diameter segment", 1)
    if name == "harmonic2d":
        E = 1.0 if energy is None else energy
        a = np.sqrt(2.0 * (E + 2.0 * delta))
        return CycleSpec(2, lambda s: _concentric_disk(s, a), "disk", 2)
    if name == "annulus2d":
        E = 0.0 if energy is None else energy
        root = np.sqrt(9.0 + 16.0 * (E + 2.0 * delta))
        r_in = np.sqrt(max((5.0 - root) / 2.0, 0.0))
        r_out = np.sqrt((5.0 + root) / 2.0)

        def seg(s):
            r = r_in + (r_out - r_in) * s[..., 0]
            return np.stack([r, np.zeros_like(r)], axis=-1)
        return CycleSpec(1, seg, "radial segment", 2)
    raise LinkingError(f"no builtin cycle for {name!r}; supply a polyline or mesh")


def polyline_cycle(points) -> CycleSpec:
    """Piecewise-linear degree-1 cycle through the given points (arc-length parametrized)."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) < 2:
        raise LinkingError("polyline needs at least two points")
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)]) / np.sum(seg)

    def f(s):
        t = s[..., 0]
        return np.stack([np.interp(t, cum, P[:, i]) for i in range(P.shape[1])], axis=-1)
    return CycleSpec(1, f, "polyline", P.shape[1])


def mesh_cycle(points) -> CycleSpec:
    """Bilinear degree-2 cycle through an (m1, m2, n) array of mesh points."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 3 or min(P.shape[:2]) < 2:
        raise LinkingError("mesh must have shape (m1, m2, n) with m1, m2 >= 2")
    m1, m2 = P.shape[:2]

    def f(s):
        u = np.clip(s[..., 0], 0, 1) * (m1 - 1)
        v = np.clip(s[..., 1], 0, 1) * (m2 - 1)
        i = np.minimum(u.astype(int), m1 - 2)
        j = np.minimum(v.astype(int), m2 - 2)
        fu, fv = (u - i)[..., None], (v - j)[..., None]
        return ((1 - fu) * (1 - fv) * P[i, j] + fu * (1 - fv) * P[i + 1, j]
                + (1 - fu) * fv * P[i, j + 1] + fu * fv * P[i + 1, j + 1])
    return CycleSpec(2, f, "mesh", P.shape[2])


def parameter_grid(degree: int, n_s: int):
    """Grid over [0,1]^degree, shape (n_s,)*degree + (degree,), plus its boundary mask."""
    ax = np.linspace(0.0, 1.0, n_s)
    S = np.stack(np.meshgrid(*([ax] * degree), indexing="ij"), axis=-1)
    boundary = np.any((S == 0.0) | (S == 1.0), axis=-1)
    return S, boundary


def validate_cycle(cycle: CycleSpec, spec, delta: float, n_check: int = 33):
    S, bnd = parameter_grid(cycle.degree, n_check)
    Q = cycle(S)
    U = pot.eval_U(spec, Q)
    if np.any(U[bnd] > -delta * (1 - 1e-9)):
        raise LinkingError(f"cycle boundary leaves {{U <= -delta}} (max U = {U[bnd].max():.3g})")
    if not np.any(U > 0):
        raise LinkingError("cycle interior misses the negative set; linking is vacuous")


# -- parameters ----------------------------------------------------------------

@dataclass
class LinkingParams:
    delta: float
    r: float
    qb_distance: float
    barrier_floor: float
    tau0: Optional[float] = None
    tau1: Optional[float] = None
    rho: Optional[float] = None
    grid_resolution: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"delta": self.delta, "r": self.r, "qb_distance": self.qb_distance,
                "barrier_floor": self.barrier_floor, "tau0": self.tau0, "tau1": self.tau1,
                "rho": self.rho}


def select_parameters(spec, chart, bbox, grid_n=256, cycle=None, energy_max=None,
                      delta=None, tol_grad=None) -> LinkingParams:
    """delta, r and the barrier floor; tau0 once the cycle is known, tau1 once the
    pushed cycle's energies are known."""
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bbox)
    h = float(np.max((hi - lo) / grid_n))
    Q = pot.grid_points(pot.grid_axes(chart, bbox, grid_n))
    u_max = float(np.max(pot.eval_U(spec, Q)))
    if u_max <= 0:
        raise LinkingError("negative set empty: max U <= 0 on the box")
    if delta is None:
        iso = pot.isotopy_threshold(spec, chart, bbox, min(grid_n, 128), tol_grad)
        delta = min(0.5 * iso, 0.05 * u_max)
    d = pot.estimate_qb_distance(spec, chart, delta, bbox, grid_n)
    if d <= h:
        raise LinkingError(f"refine grid: Q_B distance {d:.3g} not above resolution {h:.3g}")
    r = 0.4 * d * d
    notes = []
    if chart.family == geo.FLAT_TORUS:
        cap = 0.5 * (0.5 * min(chart.periods)) ** 2
        if r >= cap:
            r = 0.5 * cap
            notes.append("r capped below the flat-torus injectivity guard")
    elif not chart.is_flat:
        notes.append("conformal chart: r chosen heuristically (no certified injectivity radius)")
    floor = 2.0 * np.sqrt(r * delta)
    params = LinkingParams(delta, r, d, floor, grid_resolution=h, notes=notes)
    if cycle is not None:
        S, _ = parameter_grid(cycle.degree, 33)
        cmax = float(np.max(pot.eval_U(spec, cycle(S))))
        params.tau0 = min(-2.0, float(np.log(0.5 * floor / cmax)))
    if energy_max is not None:
        params.tau1 = max(2.0, 0.5 * float(np.log(2.0 * energy_max / delta)) + 1.0)
    return params


# -- the pushed cycle -------------------------------------------------------------

@dataclass
class PushResult:
    """Recorded homotopy: ``history[j]`` holds coefficients of every cycle node after step j."""

    history: np.ndarray  # (steps+1, nodes, 2K+1, n)
    steps: int
    rho: float
    K: int
    M: int

    @property
    def terminal(self):
        return self.history[-1]

    def slice(self, sigma: float) -> np.ndarray:
        """Linear interpolation in the step index; sigma in [0,1]."""
        x = sigma * (len(self.history) - 1)
        j = min(int(np.floor(x)), len(self.history) - 2)
        f = x - j
        return (1.0 - f) * self.history[j] + f * self.history[j + 1]


def _perturbation(n, K, M):
    t = np.arange(M) / M
    if n == 1:
        return np.cos(2 * np.pi * t)[:, None]
    out = np.zeros((M, n))
    out[:, 0] = np.cos(2 * np.pi * t)
    out[:, 1] = np.sin(2 * np.pi * t)
    return out


def push_cycle(cycle: CycleSpec, spec, chart, delta, rho, n_s=9, K=lp.DEFAULT_MODES,
               M=lp.DEFAULT_SAMPLES, ramp_steps=4, max_steps=4000, step_size=0.2) -> PushResult:
    """Homotopy (rel boundary) from the point-loop cycle to loops with potential integral <= -delta/2.

    Interior point loops first get a perturbation loop of radius ``rho`` so that
    no loop sits on a critical point of U; sample points then follow explicit
    steps of -grad U, each stopping once it reaches {U <= -0.6 delta}.
    """
    if rho <= 0:
        raise LinkingError("perturbation radius must be positive")
    S, bnd = parameter_grid(cycle.degree, n_s)
    centers = cycle(S).reshape(-1, spec.dimension)
    frozen = bnd.reshape(-1)
    n_nodes = len(centers)
    shape_loop = (n_nodes, 2 * K + 1, spec.dimension)
    pert = _perturbation(spec.dimension, K, M)
    coeffs = np.zeros(shape_loop)
    coeffs[:, 0] = centers
    history = [coeffs.copy()]
    moving = ~frozen
    pert_c = lp.project(pert, K)
    for j in range(1, ramp_steps + 1):
        c = history[0].copy()
        c[moving] += (rho * j / ramp_steps) * pert_c
        history.append(c)

    X = centers[:, None, :] + np.where(moving[:, None, None], rho * pert[None], 0.0)
    target = -0.5 * delta
    stop_level = -0.6 * delta
    done = frozen.copy()
    steps = 0
    while not np.all(done):
        if steps >= max_steps:
            bad = np.flatnonzero(~done)
            raise LinkingError(
                f"stuck near critical point - increase rho ({len(bad)} loops above -delta/2 "
                f"after {max_steps} steps)")
        active = ~done
        Xa = X[active]
        U = pot.eval_U(spec, Xa)
        g = pot.eval_gradU(spec, chart, Xa)
        gn = geo.metric_norm(chart, Xa, g)
        go = U > stop_level
        eta = step_size / np.maximum(1.0, gn)
        Xa = Xa - np.where(go[..., None], eta[..., None] * g, 0.0)
        X[active] = Xa
        steps += 1
        c = history[-1].copy()
        c[active] = np.stack([lp.project(x, K) for x in Xa])
        history.append(c)
        # a loop is finished once its projected Fourier loop meets the target
        for idx in np.flatnonzero(active):
            loop = lp.FourierLoop(c[idx], M)
            if lp.potential_integral(loop, spec) <= target:
                done[idx] = True
        if np.all(~go) and not np.all(done):
            # Gibbs ringing of the projection can keep the mean above target: push deeper
            stop_level *= 1.5
    log.debug("push_cycle: %d flow steps, rho=%g", steps, rho)
    return PushResult(np.asarray(history), steps, rho, K, M)


# -- the family -------------------------------------------------------------------

@dataclass
class MinimaxFamily:
    coeffs: np.ndarray  # (n_s,)*k + (n_sigma, 2K+1, n)
    taus: np.ndarray  # (n_s,)*k + (n_sigma,)
    frozen: np.ndarray  # bool, same shape as taus
    params: LinkingParams
    samples: int
    start_in_qb: np.ndarray  # bool over cycle nodes
    K1: float = 0.0
    K2: float = 0.0

    @property
    def shape(self):
        return self.taus.shape

    def point(self, idx) -> act.ActionPoint:
        return act.ActionPoint(lp.FourierLoop(self.coeffs[idx], self.samples), float(self.taus[idx]))

    def indices(self):
        return list(np.ndindex(*self.shape))

    def values(self, spec, chart, eps):
        out = np.empty(self.shape)
        for idx in self.indices():
            out[idx] = act.action_value(self.point(idx), spec, chart, eps)
        return out

    def energies(self, chart):
        out = np.empty(self.shape)
        for idx in self.indices():
            out[idx] = lp.energy(lp.FourierLoop(self.coeffs[idx], self.samples), chart)
        return out

    def check_invariants(self, spec, chart, eps, values=None):
        """sup over frozen nodes < barrier floor <= max over family; raises otherwise."""
        v = self.values(spec, chart, eps) if values is None else values
        floor = self.params.barrier_floor
        sup_frozen = float(np.max(v[self.frozen]))
        if not sup_frozen < floor:
            idx = np.unravel_index(np.argmax(np.where(self.frozen, v, -np.inf)), self.shape)
            raise LinkingError(
                f"linking not established: frozen node {tuple(int(i) for i in idx)} has action "
                f"{sup_frozen:.6g} >= barrier floor {floor:.6g}")
        vmax = float(np.max(v))
        if vmax < floor:
            raise LinkingError(f"linking not established: family max {vmax:.6g} < floor {floor:.6g}")
        return sup_frozen, vmax

    def to_json(self) -> str:
        return json.dumps({
            "shape": list(self.shape), "samples": self.samples,
            "params": self.params.to_dict(), "K1": self.K1, "K2": self.K2,
            "taus": self.taus.tolist(), "frozen": self.frozen.tolist(),
            "coefficients": self.coeffs.tolist()})


def build_family(cycle: CycleSpec, spec, chart, params: LinkingParams, push: PushResult,
                 n_sigma=(6, 12, 6), eps=0.0, check=True) -> MinimaxFamily:
    """Concatenate the tau0 -> 0 ramp on point loops, the push homotopy at tau = 0 and
    the 0 -> tau1 ramp on the pushed loops."""
    if params.tau0 is None or params.tau1 is None:
        raise LinkingError("tau0 and tau1 must be selected before building the family")
    n1, n2, n3 = n_sigma
    k = cycle.degree
    n_s = round(len(push.history[0]) ** (1.0 / k))
    M = push.M
    slices, taus = [], []
    start = push.history[0]
    for j in range(n1):
        slices.append(start)
        taus.append(params.tau0 * (1.0 - j / n1))
    for j in range(n2):
        slices.append(push.slice(j / n2))
        taus.append(0.0)
    for j in range(n3 + 1):
        slices.append(push.terminal)
        taus.append(params.tau1 * j / n3)
    C = np.stack(slices, axis=1)  # (nodes, n_sigma, 2K+1, n)
    T = np.broadcast_to(np.asarray(taus), C.shape[:2]).copy()
    grid = (n_s,) * k
    C = C.reshape(grid + C.shape[1:])
    T = T.reshape(grid + T.shape[1:])
    _, bnd = parameter_grid(k, n_s)
    frozen = np.zeros(T.shape, dtype=bool)
    frozen |= bnd[..., None]
    frozen[..., 0] = True
    frozen[..., -1] = True

    centers = start[:, 0].reshape(grid + (spec.dimension,))
    f = pot.qb_function(spec, chart, centers)
    in_qb = f > np.sqrt(2.0) * params.delta
    fam = MinimaxFamily(C, T, frozen, params, M, in_qb)
    values = fam.values(spec, chart, eps)
    fam.K1 = params.barrier_floor
    fam.K2 = float(np.max(values))
    if check:
        fam.check_invariants(spec, chart, eps, values)
        # sigma-lines starting in Q_B must cross E = r
        E_end = np.array([lp.energy(lp.FourierLoop(c, M), chart) for c in push.terminal])
        E_end = E_end.reshape(grid)
        bad = in_qb & ~(E_end > params.r)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise LinkingError(
                f"linking not established: sigma-line {idx} starts in Q_B but never reaches E = r")
    return fam
