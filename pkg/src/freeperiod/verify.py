"""Physical orbits from critical points, and independent certificates for them.

A critical point (x, tau) gives the T-periodic orbit q(t) = x(t / T) with
T = exp(tau).  The certificates are the Euler-Lagrange and energy-identity
residuals of the loop, the deviation of the Hamiltonian from its exact
penalized level, a shooting cross-check with an adaptive Runge-Kutta
integrator, and (on flat tori) the winding vector.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import action as act
from . import geometry as geo
from . import loops as lp
from . import potential as pot
from .errors import OracleError


@dataclass
class CriticalOrbit:
    period: float
    t: np.ndarray  # (n+1,), t[0] = 0 and t[-1] = period
    q: np.ndarray  # (n+1, dim)
    qdot: np.ndarray
    p: np.ndarray
    H: np.ndarray
    eps: float = 0.0
    tau: float = None
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.period > 0:
            raise OracleError("period must be positive")
        if self.tau is None:
            self.tau = float(np.log(self.period))

    @property
    def dimension(self) -> int:
        return self.q.shape[1]


def reconstruct(record, spec, chart, n_samples: int = 512) -> CriticalOrbit:
    """Undo the reparametrization of a critical point and attach its certificates."""
    x, tau, eps = record.point.loop, record.point.tau, record.eps
    T = float(np.exp(tau))
    s = np.arange(n_samples + 1) / n_samples
    q = lp.eval_loop(x, s)
    qdot = np.exp(-tau) * lp.eval_velocity(x, s)
    wgt = geo.conformal_weight(chart, q)
    p = wgt[:, None] * qdot
    H = 0.5 * wgt * np.sum(qdot * qdot, axis=-1) - pot.eval_U(spec, q)
    level = eps * np.exp(-tau) * act.penalty_prime(tau)
    res = record.residuals
    cert = {
        "el_resid_sup": float(res.el_resid_sup),
        "energy_ident_sup": float(res.energy_ident_sup),
        "hamiltonian_dev": float(np.max(np.abs(H - level))),
    }
    orbit = CriticalOrbit(T, T * s, q, qdot, p, H, eps, float(tau), cert)
    if chart.family == geo.FLAT_TORUS:
        cert["winding"] = [int(w) for w in winding_numbers(orbit, chart)]
    return orbit


def lagrangian_action(orbit: CriticalOrbit, spec, chart) -> float:
    """int_0^T (|q'|^2 / 2 + U(q)) dt by the periodic rectangle rule."""
    q, v = orbit.q[:-1], orbit.qdot[:-1]
    wgt = geo.conformal_weight(chart, q)
    dens = 0.5 * wgt * np.sum(v * v, axis=-1) + pot.eval_U(spec, q)
    return float(orbit.period * np.mean(dens))


def _vector_field(spec, chart):
    n = spec.dimension

    def f(_, y):
        q, v = y[:n], y[n:]
        a = pot.eval_gradU(spec, chart, q[None])[0]
        if not chart.is_flat:
            # remove the Christoffel term of the conformal metric
            a = a - (geo.covariant_accel(chart, q[None], v[None], np.zeros((1, n)))[0])
        return np.concatenate([v, a])
    return f


def shooting_crosscheck(orbit: CriticalOrbit, spec, chart, rtol: float = 1e-10):
    """Integrate q'' = grad U (covariantly) from the orbit's initial state over one period.

    Returns ``(closure, deviation)``: closure is |q(T) - q(0)| + |q'(T) - q'(0)|
    of the integrated solution and deviation the largest distance between the
    integrated and the variational orbit at the sample times.
    """
    n = orbit.dimension
    y0 = np.concatenate([orbit.q[0], orbit.qdot[0]])
    scale = max(1.0, float(np.max(np.abs(orbit.q))), float(np.max(np.abs(orbit.qdot))))
    sol = solve_ivp(_vector_field(spec, chart), (0.0, orbit.period), y0, method="DOP853",
                    rtol=rtol, atol=rtol * scale, t_eval=orbit.t, dense_output=False)
    if not sol.success:
        raise OracleError(f"shooting integrator failed: {sol.message}")
    Y = sol.y.T
    closure = float(np.linalg.norm(Y[-1, :n] - y0[:n]) + np.linalg.norm(Y[-1, n:] - y0[n:]))
    deviation = float(np.max(np.linalg.norm(Y[:, :n] - orbit.q, axis=1)))
    return closure, deviation


def winding_numbers(orbit: CriticalOrbit, chart) -> np.ndarray:
    """Displacement over one loop in the universal cover, in units of the periods."""
    if chart.family != geo.FLAT_TORUS:
        raise OracleError("winding numbers need a flat torus chart")
    L = np.asarray(chart.periods, dtype=float)
    q = np.asarray(orbit.q, dtype=float)
    out = np.empty(len(L))
    for i, Li in enumerate(L):
        lifted = np.unwrap(q[:, i], period=Li)
        out[i] = (lifted[-1] - lifted[0]) / Li
    k = np.rint(out)
    if np.any(np.abs(out - k) > 1e-6):
        raise OracleError(f"loop does not close on the torus: displacement {out.tolist()}")
    return k.astype(int)


def certify(orbit: CriticalOrbit, spec, chart, rtol: float = 1e-10) -> dict:
    """Fill in the shooting certificates and the containment margin."""
    closure, deviation = shooting_crosscheck(orbit, spec, chart, rtol)
    orbit.certificates["shooting_closure"] = closure
    orbit.certificates["shooting_deviation"] = deviation
    orbit.certificates["min_U"] = float(np.min(pot.eval_U(spec, orbit.q)))
    return orbit.certificates


# -- CSV --------------------------------------------------------------------------

def orbit_header(n):
    return ["t"] + [f"q_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)] + ["H"]


def orbit_to_csv(orbit: CriticalOrbit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(orbit_header(orbit.dimension))
    for row in np.column_stack([orbit.t, orbit.q, orbit.p, orbit.H]):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_orbit_csv(orbit: CriticalOrbit, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(orbit_to_csv(orbit))


def read_orbit_csv(path, chart) -> CriticalOrbit:
    """Load an orbit; velocities are recovered from momenta through the metric."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise OracleError(f"{path}: empty orbit file")
    header = rows[0]
    n = (len(header) - 2) // 2
    if n < 1 or header != orbit_header(n):
        raise OracleError(f"{path}: unexpected header {header}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise OracleError(f"{path}: malformed number ({exc})") from exc
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 2 * n + 2:
        raise OracleError(f"{path}: malformed orbit table")
    t, q, p, H = data[:, 0], data[:, 1:n + 1], data[:, n + 1:2 * n + 1], data[:, -1]
    qdot = p / geo.conformal_weight(chart, q)[:, None]
    return CriticalOrbit(float(t[-1] - t[0]), t - t[0], q, qdot, p, H)
