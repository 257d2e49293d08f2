"""Critical points of the penalized action: minimax deformation, Newton refinement,
and continuation of the penalty weight towards zero."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import action as act
from . import loops as lp
from .errors import LinkingError, SolverError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    eps0: float | None = None  # None: 0.1 * barrier floor, capped by the frozen-node bound
    eps_factor: float = 0.3
    eps_min: float = 1e-6
    tol_deform: float = 1e-3
    tol_newton: float = 1e-10
    max_outer: int = 1500
    max_newton: int = 50
    step0: float = 1e-2
    backtrack: float = 0.5
    armijo: float = 1e-4
    band: float = 0.2
    max_displacement: float = 0.05
    max_candidates: int = 8
    tau_min: float = -50.0
    tau_max: float = 50.0
    energy_min: float = 1e-6
    normalized: bool = False
    fd_step: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.eps_factor < 1.0:
            raise SolverError("eps_factor must lie in (0, 1)")
        if self.eps0 is not None and not 0.0 < self.eps_min <= self.eps0:
            raise SolverError("need 0 < eps_min <= eps0")
        if min(self.tol_deform, self.tol_newton) <= 0:
            raise SolverError("tolerances must be positive")


@dataclass
class DeformResult:
    point: act.ActionPoint
    value: float
    grad_norm: float
    index: tuple
    sweeps: int
    converged: bool
    max_history: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    floor_breached: bool = False


@dataclass
class CriticalPointRecord:
    point: act.ActionPoint
    eps: float
    value: float
    grad_norm: float
    residuals: act.ResidualReport
    iterations: int
    tau_history: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    converged: bool = True

    def to_dict(self):
        return {
            "tau": self.point.tau, "period": self.point.period, "eps": self.eps,
            "value": self.value, "grad_norm": self.grad_norm,
            "residuals": self.residuals.to_dict(), "iterations": self.iterations,
            "tau_history": list(self.tau_history), "stages": list(self.stages),
        }


# -- minimax deformation ------------------------------------------------------------

def _flow_field(grads, norms, values, level, vmax, movable, normalized):
    """Cut-off descent field: full speed at the max, fading to zero at ``level``."""
    span = vmax - level
    f = np.clip((values - level) / span, 0.0, 1.0) if span > 0 else (values >= vmax).astype(float)
    f = np.where(movable, f, 0.0)
    if normalized:
        f = f / np.maximum(norms, 1e-300) ** 2
    return -f[:, None] * grads


def minimax_deform(family, spec, chart, eps, cfg: SolverConfig) -> DeformResult:
    """Push the family's maximum down with a cut-off gradient flow, boundary frozen.

    All interior nodes move together by one explicit step of the field
    ``-phi(L) grad L`` where phi ramps from 0 at ``max - band * (max - floor)``
    to 1 at the max.  A common step is halved until no node increases, which
    keeps the sweep monotone and the deformed family close to a continuous
    deformation.  The argmax (ties to the lowest multi-index) is recorded after
    every sweep; argmax nodes at local minima of the gradient norm are kept as
    refinement seeds in ``candidates``.
    """
    shape = family.shape
    N = int(np.prod(shape))
    rows, n = family.coeffs.shape[-2:]
    C = family.coeffs.reshape(N, rows, n).copy()
    T = family.taus.reshape(N).copy()
    movable = ~family.frozen.reshape(N)
    M = family.samples
    values, grads, norms = act.evaluate_batch(C, T, spec, chart, eps, M)
    floor = family.params.barrier_floor
    history = [float(values.max())]
    tops = []  # (grad_norm, value, flat index, sweep, coeffs, tau)
    converged = False
    breached = False
    sweeps = 0
    h = cfg.step0
    while True:
        top = int(np.argmax(values))
        tops.append((float(norms[top]), float(values[top]), top, sweeps, C[top].copy(), float(T[top])))
        if norms[top] <= cfg.tol_deform:
            converged = True
            break
        if sweeps >= cfg.max_outer:
            break
        vmax = values[top]
        level = vmax - cfg.band * max(vmax - floor, 0.0)
        field_ = _flow_field(grads, norms, values, level, vmax, movable, cfg.normalized)
        moving = np.flatnonzero(np.any(field_ != 0.0, axis=1))
        if len(moving) == 0:
            break
        speed = np.sqrt(np.sum(field_[moving] ** 2, axis=1)).max()
        h = min(h, cfg.max_displacement / speed)
        while True:
            Z = np.concatenate([C[moving].reshape(len(moving), -1), T[moving, None]], axis=1)
            Z = Z + h * field_[moving]
            Tn = Z[:, -1]
            if np.all((Tn >= cfg.tau_min) & (Tn <= cfg.tau_max)):
                v, g, nn = act.evaluate_batch(Z[:, :-1].reshape(-1, rows, n), Tn, spec, chart, eps, M)
                if np.all(v <= values[moving]):
                    break
            h *= cfg.backtrack
            if h < 1e-14:
                raise SolverError("deformation step underflow")
        C[moving] = Z[:, :-1].reshape(-1, rows, n)
        T[moving] = Tn
        values[moving], grads[moving], norms[moving] = v, g, nn
        h = min(h * 1.25, 1.0)
        sweeps += 1
        new_max = float(values.max())
        # each node is non-increasing, hence so is the max
        assert new_max <= history[-1]
        history.append(new_max)
        if new_max < floor:
            breached = True
            log.warning("linking violated numerically: family max %.6g fell below the barrier "
                        "floor %.6g", new_max, floor)
            break
        if sweeps % 200 == 0:
            log.info("deform sweep %d: max %.8g |grad| %.3g", sweeps, new_max, norms[top])
    family.coeffs[...] = C.reshape(family.coeffs.shape)
    family.taus[...] = T.reshape(shape)
    candidates = _seed_candidates(tops, cfg.max_candidates)
    g, val, flat, _, coeffs, tau = tops[-1] if converged else candidates[0]
    point = act.ActionPoint(lp.FourierLoop(coeffs, M), tau)
    seeds = [act.ActionPoint(lp.FourierLoop(c[4], M), c[5]) for c in candidates]
    idx = tuple(int(i) for i in np.unravel_index(flat, shape))
    return DeformResult(point, val, g, idx, sweeps, converged, history, seeds, breached)


def _seed_candidates(tops, limit):
    """Argmax records at local minima of the gradient norm.

    Ranked by gradient norm relative to the action value, so that a near
    saddle passed at a high level is not crowded out by the slow tail of the
    flow; records within 1% in value of a better one are dropped.
    """
    g = [t[0] for t in tops]
    mins = []
    for i, t in enumerate(tops):
        left = g[i - 1] if i > 0 else np.inf
        right = g[i + 1] if i + 1 < len(g) else np.inf
        if g[i] < left and g[i] <= right:
            mins.append(t)
    if not mins:
        mins = list(tops)
    mins.sort(key=lambda t: (t[0] / max(abs(t[1]), 1e-300), t[3]))
    keep = []
    for t in mins:
        if all(abs(t[1] - k[1]) > 0.01 * abs(k[1]) for k in keep):
            keep.append(t)
        if len(keep) == limit:
            break
    return keep


# -- Newton refinement -----------------------------------------------------------------

def _residual(z, template, spec, chart, eps):
    p = template.from_vector(z)
    return act.evaluate(p, spec, chart, eps).flat_gradient()


def fd_jacobian(z, template, spec, chart, eps, step=1e-6):
    """Central-difference Jacobian of the gradient map."""
    n = len(z)
    J = np.empty((n, n))
    for i in range(n):
        h = step * max(1.0, abs(z[i]))
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        J[:, i] = (_residual(zp, template, spec, chart, eps)
                   - _residual(zm, template, spec, chart, eps)) / (2 * h)
    return J


def newton_refine(seed: act.ActionPoint, spec, chart, eps, cfg: SolverConfig) -> CriticalPointRecord:
    """Damped Newton on (H^1 gradient, tau-derivative) = 0 with a finite-difference Jacobian."""
    z = seed.vector()
    F = _residual(z, seed, spec, chart, eps)
    if not np.all(np.isfinite(F)):
        raise SolverError("seed gradient is not finite")
    norms = [float(np.linalg.norm(F))]
    taus = [seed.tau]
    mu = 0.0
    it = 0
    while it < cfg.max_newton:
        p = seed.from_vector(z)
        ev = act.evaluate(p, spec, chart, eps)
        if ev.grad_norm <= cfg.tol_newton:
            break
        it += 1
        J = fd_jacobian(z, seed, spec, chart, eps, cfg.fd_step)
        f0 = float(np.linalg.norm(F))
        accepted = False
        for _ in range(12):
            if mu > 0.0:
                dz = -np.linalg.solve(J.T @ J + mu * np.eye(len(z)), J.T @ F)
            else:
                dz = -np.linalg.lstsq(J, F, rcond=1e-12)[0]
            t = 1.0
            for _ in range(8):
                zn = z + t * dz
                if cfg.tau_min <= zn[-1] <= cfg.tau_max:
                    Fn = _residual(zn, seed, spec, chart, eps)
                    if np.all(np.isfinite(Fn)) and np.linalg.norm(Fn) < (1 - 1e-4 * t) * f0:
                        accepted = True
                        break
                t *= 0.5
            if accepted:
                mu = 0.0 if mu == 0.0 else mu * 0.1
                break
            mu = max(mu * 10.0, 1e-8 * float(np.max(np.abs(np.diag(J.T @ J)))) or 1e-12)
        if not accepted:
            # no decrease from the current point; stop and report
            break
        z, F = zn, Fn
        taus.append(float(z[-1]))
        norms.append(float(np.linalg.norm(F)))
        if not cfg.tau_min <= z[-1] <= cfg.tau_max:
            raise SolverError(f"tau runaway: tau = {z[-1]:.4g}")
        if len(norms) > 5 and norms[-1] > 10.0 * norms[-6]:
            raise SolverError("refinement diverged")
    p = seed.from_vector(z)
    ev = act.evaluate(p, spec, chart, eps)
    res = act.residual_report(p, spec, chart, eps)
    converged = ev.grad_norm <= cfg.tol_newton
    return CriticalPointRecord(p, eps, ev.value, ev.grad_norm, res, it, taus, converged=converged)


def refine_candidates(deform: DeformResult, floor, spec, chart, eps, cfg: SolverConfig
                      ) -> CriticalPointRecord:
    """Newton from each deformation seed in turn; the first genuine critical point wins.

    A converged point is rejected when its value lies below the barrier floor
    (the minimax value cannot) or its loop has collapsed to a constant; both
    signal the spurious branch near a maximum of U.
    """
    seeds = deform.candidates or [deform.point]
    reasons = []
    for k, seed in enumerate(seeds):
        try:
            rec = newton_refine(seed, spec, chart, eps, cfg)
        except SolverError as exc:
            reasons.append(f"seed {k}: {exc}")
            continue
        if not rec.converged:
            reasons.append(f"seed {k}: |grad| stalled at {rec.grad_norm:.3g}")
            continue
        E = lp.energy(rec.point.loop, chart)
        if E < cfg.energy_min or rec.value < floor:
            reasons.append(f"seed {k}: spurious branch (c={rec.value:.4g}, energy={E:.3g})")
            continue
        log.info("seed %d accepted: c %.10g tau %.10g", k, rec.value, rec.point.tau)
        return rec
    raise SolverError("no deformation seed refined to a critical point above the barrier: "
                      + "; ".join(reasons))


def depenalize(record: CriticalPointRecord, spec, chart, cfg: SolverConfig,
               on_stage=None) -> CriticalPointRecord:
    """Continue the critical point along eps <- eps * factor down to eps_min."""
    eps = record.eps
    current = record
    stages = [_stage_summary(record)]
    tau_hist = [record.point.tau]
    factor = cfg.eps_factor
    halved = False
    while eps > cfg.eps_min * (1 + 1e-12):
        next_eps = max(eps * factor, cfg.eps_min)
        try:
            rec = newton_refine(current.point, spec, chart, next_eps, cfg)
            if not rec.converged:
                raise SolverError(f"stage eps={next_eps:.3g} did not converge "
                                  f"(|grad| = {rec.grad_norm:.3g})")
        except SolverError:
            if halved:
                raise
            halved = True
            factor = 1.0 - 0.5 * (1.0 - factor)
            log.warning("depenalization stage failed; retrying with factor %.3g", factor)
            continue
        E = lp.energy(rec.point.loop, chart)
        if E < cfg.energy_min:
            raise SolverError(
                f"loop collapsing - likely spurious branch (eps={next_eps:.3g}, energy={E:.3g}, "
                f"tau={rec.point.tau:.4g})")
        if not cfg.tau_min <= rec.point.tau <= cfg.tau_max:
            raise SolverError(f"tau runaway at eps={next_eps:.3g}: tau = {rec.point.tau:.4g}")
        eps = next_eps
        current = rec
        tau_hist.append(rec.point.tau)
        stages.append(_stage_summary(rec))
        if on_stage is not None:
            on_stage(rec)
        log.info("depenalize: eps %.3g tau %.10g c %.10g |grad| %.3g", eps, rec.point.tau,
                 rec.value, rec.grad_norm)
    current.tau_history = tau_hist
    current.stages = stages
    return current


def _stage_summary(rec):
    return {"eps": rec.eps, "tau": rec.point.tau, "c": rec.value, "grad_norm": rec.grad_norm,
            "gap_U": rec.residuals.crit_value_gap_U, "gap_E": rec.residuals.crit_value_gap_E,
            "iterations": rec.iterations}


# -- the full pipeline -----------------------------------------------------------------

@dataclass
class SolveResult:
    orbit: object
    record: CriticalPointRecord
    initial: CriticalPointRecord
    params: object
    family: object
    deform: DeformResult
    report: object
    certified: bool
    thresholds: dict
    summary: dict


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def initial_eps(cfg: SolverConfig, params) -> float:
    """eps0: 0.1 * barrier floor, capped so the frozen tau0 nodes keep a margin below the floor."""
    if cfg.eps0 is not None:
        return float(cfg.eps0)
    floor = params.barrier_floor
    return float(min(0.1 * floor, 0.25 * floor / act.penalty(params.tau0)))


def prepare_family(config: dict, problem, cfg: SolverConfig = None):
    """Linking parameters, pushed cycle and minimax family at eps0; returns (params, family, eps0)."""
    from . import linking as lk

    spec, chart, bbox = problem.spec, problem.chart, problem.bbox
    cfg = cfg or SolverConfig(**config["solver"])
    disc, lkc, homc = config["discretization"], config["linking"], config["homology"]
    K, M = int(disc["modes"]), int(disc["samples"])
    grid_d = int(homc["distance_grid_n"])
    params = lk.select_parameters(spec, chart, bbox, grid_d, delta=homc["delta"])
    cycle = problem.cycle(params.delta)
    lk.validate_cycle(cycle, spec, params.delta)
    rho = lkc["rho"] if lkc["rho"] is not None else 2.0 * problem.grid_resolution(
        int(homc["grid_n"]))
    try:
        push = lk.push_cycle(cycle, spec, chart, params.delta, float(rho),
                             n_s=int(lkc["nodes"]), K=K, M=M)
    except LinkingError as exc:
        if "stuck" not in str(exc):
            raise
        rho = 2.0 * rho
        log.warning("%s; retrying once with rho = %.4g", exc, rho)
        push = lk.push_cycle(cycle, spec, chart, params.delta, float(rho),
                             n_s=int(lkc["nodes"]), K=K, M=M)
    E_max = max(lp.energy(lp.FourierLoop(c, M), chart) for c in push.terminal)
    params = lk.select_parameters(spec, chart, bbox, grid_d, cycle=cycle, energy_max=E_max,
                                  delta=params.delta)
    params.rho = float(rho)
    eps0 = initial_eps(cfg, params)
    if not cfg.eps_min <= eps0:
        raise SolverError(f"eps_min {cfg.eps_min:g} exceeds eps0 {eps0:g}")
    family = lk.build_family(cycle, spec, chart, params, push, n_sigma=tuple(lkc["n_sigma"]),
                             eps=eps0)
    return params, family, eps0


def solve(config: dict, problem=None, check=True) -> SolveResult:
    """checks -> parameters -> family -> deformation -> refinement -> continuation -> certificates.

    ``config`` is a resolved configuration (see ``freeperiod.config``).
    """
    import time

    from . import potential as pot
    from . import problem as pb
    from . import verify as vf

    clock = time.perf_counter()
    timing = {}
    if problem is None:
        problem = pb.build_problem(config)
    spec, chart, bbox = problem.spec, problem.chart, problem.bbox
    cfg = SolverConfig(**config["solver"])
    homc = config["homology"]
    K, M = int(config["discretization"]["modes"]), int(config["discretization"]["samples"])

    report = pb.run_checks(problem)
    timing["checks"] = time.perf_counter() - clock
    if check and not config["checks"]["override"] and not report.all_ok:
        raise HypothesisFailure(report)

    params, family, eps0 = prepare_family(config, problem, cfg)
    frozen_before = family.coeffs[family.frozen].copy()
    timing["family"] = time.perf_counter() - clock
    log.info("family %s: floor %.6g, max %.6g, eps0 %.3g", family.shape, params.barrier_floor,
             family.K2, eps0)

    deform = minimax_deform(family, spec, chart, eps0, cfg)
    if not np.array_equal(frozen_before, family.coeffs[family.frozen]):
        raise SolverError("frozen boundary moved during the deformation")
    timing["deform"] = time.perf_counter() - clock
    initial = refine_candidates(deform, params.barrier_floor, spec, chart, eps0, cfg)
    window = (0.5 * family.K1, 2.0 * family.K2)
    out_of_window = []

    def watch(rec):
        if not window[0] <= rec.value <= window[1]:
            out_of_window.append(rec.eps)
            log.warning("c_eps = %.6g outside [%.6g, %.6g] at eps %.3g", rec.value, *window, rec.eps)

    watch(initial)
    final = depenalize(initial, spec, chart, cfg, on_stage=watch)
    timing["solve"] = time.perf_counter() - clock

    orbit = vf.reconstruct(final, spec, chart, int(config["output"]["orbit_samples"]))
    vf.certify(orbit, spec, chart, float(config["output"]["shooting_rtol"]))
    Q = pot.grid_points(pot.grid_axes(chart, bbox, int(homc["grid_n"])))
    inside = pot.eval_U(spec, Q) > 0
    max_grad = float(np.max(pot.grad_norm(spec, chart, Q[inside]))) if np.any(inside) else 1.0
    thresholds = {"el_resid_sup": 1e-6 * max_grad, "energy_ident_sup": 1e-6,
                  "shooting_closure": 1e-4, "min_U": -1e-6}
    cert = orbit.certificates
    certified = (cert["el_resid_sup"] <= thresholds["el_resid_sup"]
                 and cert["energy_ident_sup"] <= thresholds["energy_ident_sup"]
                 and cert["shooting_closure"] <= thresholds["shooting_closure"]
                 and cert["min_U"] >= thresholds["min_U"]
                 and all(w == 0 for w in cert.get("winding", [])))
    timing["verify"] = time.perf_counter() - clock

    pdict = params.to_dict()
    pdict.update({"K1": family.K1, "K2": family.K2, "eps0": eps0, "notes": list(params.notes)})
    summary = {
        "problem": problem.name,
        "T": orbit.period, "tau": final.point.tau, "c": final.value, "eps_final": final.eps,
        "certified": certified,
        "certificates": cert, "thresholds": thresholds,
        "parameters": pdict,
        "iterations": {
            "deform_sweeps": deform.sweeps, "deform_converged": deform.converged,
            "deform_max": deform.max_history[-1], "floor_breached": deform.floor_breached,
            "newton_initial": initial.iterations, "stages": final.stages,
        },
        "value_window": {"bounds": list(window), "violations": out_of_window},
        "checks": report.to_dict(),
        "loop": {"modes": K, "samples": M,
                 "coefficients": final.point.loop.coeffs.tolist()},
        "config": config,
        "timing": timing,
    }
    return SolveResult(orbit, final, initial, params, family, deform, report, certified,
                       thresholds, _jsonable(summary))


class HypothesisFailure(SolverError):
    """Raised by ``solve`` when the hypothesis checks fail and are not overridden."""

    stage = "check"

    def __init__(self, report):
        super().__init__("hypothesis checks failed: " + "; ".join(report.notes or ["see report"]))
        self.report = report
