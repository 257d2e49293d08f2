"""Penalized free-period action on Fourier loops.

For a 1-periodic loop x and tau = log(period),

    L_eps(x, tau) = exp(-tau) E(x) + exp(tau) U(x) + eps * P(tau),
    P(tau) = exp(-tau) + exp(tau / 2),

with E the energy and U the potential integral of the loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import loops as lp
from . import potential as pot
from .errors import RangeError

TAU_LIMIT = 700.0


def _check_tau(tau):
    if not np.isfinite(tau) or abs(tau) > TAU_LIMIT:
        raise RangeError(f"tau={tau!r} outside the representable range")


def penalty(tau: float) -> float:
    _check_tau(tau)
    return float(np.exp(-tau) + np.exp(0.5 * tau))


def penalty_prime(tau: float) -> float:
    _check_tau(tau)
    return float(-np.exp(-tau) + 0.5 * np.exp(0.5 * tau))


@dataclass
class ActionPoint:
    """A loop together with its log-period; evaluations are cached per eps."""

    loop: lp.FourierLoop
    tau: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def period(self) -> float:
        return float(np.exp(self.tau))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.loop.coeffs.ravel(), [self.tau]])

    def from_vector(self, v) -> "ActionPoint":
        v = np.asarray(v, dtype=float)
        return ActionPoint(self.loop.with_coeffs(v[:-1]), float(v[-1]))

    def cached(self, key):
        return self._cache.get(key)


@dataclass
class Evaluation:
    value: float
    xi: np.ndarray  # H^1 gradient field, shape (2K+1, n)
    dtau: float
    energy: float
    potential: float

    @property
    def grad_norm(self) -> float:
        return float(np.sqrt(lp.h1_inner(self.xi, self.xi) + self.dtau ** 2))

    def flat_gradient(self) -> np.ndarray:
        return np.concatenate([self.xi.ravel(), [self.dtau]])


@dataclass
class ResidualReport:
    el_resid_sup: float
    energy_ident_sup: float
    crit_value_gap_U: float
    crit_value_gap_E: float

    def to_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def action_value(p: ActionPoint, spec, chart, eps: float = 0.0) -> float:
    _check_tau(p.tau)
    E = lp.energy(p.loop, chart)
    U = lp.potential_integral(p.loop, spec)
    return float(np.exp(-p.tau) * E + np.exp(p.tau) * U + eps * penalty(p.tau))


def _l2_field(p: ActionPoint, spec, chart):
    """L^2 representative of the x-differential, built in weak form from node samples."""
    x = p.loop
    K = x.modes
    X, V, _ = x.nodes()
    et, emt = np.exp(p.tau), np.exp(-p.tau)
    dU = pot.eval_dU(spec, X)
    if chart is None or chart.is_flat:
        pair_dot = emt * V
        pair_val = et * dU
    else:
        wgt = geo.conformal_weight(chart, X)[:, None]
        dphi = chart.conformal.grad(X)
        pair_dot = emt * wgt * V
        pair_val = emt * wgt * np.sum(V * V, axis=-1, keepdims=True) * dphi + et * dU
    A = lp.project(pair_dot, K)
    B = lp.project(pair_val, K)
    w = 2.0 * np.pi * np.arange(1, K + 1)[:, None]
    out = np.empty_like(B)
    out[0] = B[0]
    # integrate the derivative pairing by parts mode by mode
    out[1:K + 1] = B[1:K + 1] - w * A[K + 1:]
    out[K + 1:] = B[K + 1:] + w * A[1:K + 1]
    return out


def evaluate(p: ActionPoint, spec, chart, eps: float = 0.0) -> Evaluation:
    key = ("eval", float(eps))
    hit = p._cache.get(key)
    if hit is not None and hit[0] is spec and hit[1] is chart:
        return hit[2]
    _check_tau(p.tau)
    E = lp.energy(p.loop, chart)
    U = lp.potential_integral(p.loop, spec)
    et, emt = np.exp(p.tau), np.exp(-p.tau)
    value = emt * E + et * U + eps * penalty(p.tau)
    xi = lp.precondition(_l2_field(p, spec, chart))
    dtau = -emt * E + et * U + eps * penalty_prime(p.tau)
    ev = Evaluation(float(value), xi, float(dtau), E, U)
    p._cache[key] = (spec, chart, ev)
    return ev


def action_gradient(p: ActionPoint, spec, chart, eps: float = 0.0):
    """(H^1 gradient field, tau-derivative)."""
    ev = evaluate(p, spec, chart, eps)
    return ev.xi, ev.dtau


def el_residual(p: ActionPoint, spec, chart) -> float:
    """sup over nodes of |x'' (covariant) - exp(2 tau) grad U(x)| in the metric norm."""
    X, V, A = p.loop.nodes()
    acc = geo.covariant_accel(chart, X, V, A) if chart is not None else A
    g = pot.eval_gradU(spec, chart, X) if chart is not None else pot.eval_dU(spec, X)
    r = acc - np.exp(2.0 * p.tau) * g
    norms = geo.metric_norm(chart, X, r) if chart is not None else np.linalg.norm(r, axis=-1)
    return float(np.max(norms))


def energy_identity_residual(p: ActionPoint, spec, chart, eps: float = 0.0) -> float:
    X, V, _ = p.loop.nodes()
    wgt = geo.conformal_weight(chart, X) if chart is not None else 1.0
    h = 0.5 * np.exp(-p.tau) * wgt * np.sum(V * V, axis=-1) - np.exp(p.tau) * pot.eval_U(spec, X)
    return float(np.max(np.abs(h - eps * penalty_prime(p.tau))))


def critical_value_identities(p: ActionPoint, spec, chart, eps: float = 0.0):
    """Gaps in c = 2 e^tau U + (3/2) eps e^(tau/2) and c = 2 e^-tau E + eps (2 e^-tau + e^(tau/2)/2)."""
    ev = evaluate(p, spec, chart, eps)
    t = p.tau
    gap_U = abs(ev.value - 2.0 * np.exp(t) * ev.potential - 1.5 * eps * np.exp(0.5 * t))
    gap_E = abs(ev.value - 2.0 * np.exp(-t) * ev.energy
                - eps * (2.0 * np.exp(-t) + 0.5 * np.exp(0.5 * t)))
    return float(gap_U), float(gap_E)


def residual_report(p: ActionPoint, spec, chart, eps: float = 0.0) -> ResidualReport:
    gU, gE = critical_value_identities(p, spec, chart, eps)
    return ResidualReport(el_residual(p, spec, chart),
                          energy_identity_residual(p, spec, chart, eps), gU, gE)


def _synth(B, a):
    """B @ a over a batch: B is (M, K), a is (N, K, n); returns (N, M, n) with one GEMM."""
    N, K, n = a.shape
    out = B @ a.transpose(1, 0, 2).reshape(K, N * n)
    return out.reshape(B.shape[0], N, n).transpose(1, 0, 2)


def _project_batch(F, K):
    """``loops.project`` over a leading batch axis: F has shape (N, M, n)."""
    N, M, n = F.shape
    _, C, S, _ = lp._basis(K, M)
    Fm = F.transpose(1, 0, 2).reshape(M, N * n)
    out = np.empty((N, 2 * K + 1, n))
    out[:, 0] = F.mean(axis=1)
    out[:, 1:K + 1] = ((2.0 / M) * (C.T @ Fm)).reshape(K, N, n).transpose(1, 0, 2)
    out[:, K + 1:] = ((2.0 / M) * (S.T @ Fm)).reshape(K, N, n).transpose(1, 0, 2)
    return out


def evaluate_batch(coeffs, taus, spec, chart, eps: float = 0.0, samples: int = lp.DEFAULT_SAMPLES):
    """Values, flat gradients (H^1 field ravelled, then d/dtau) and gradient norms of many points.

    Same numbers as ``evaluate`` on each point; used by the family deformation.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if not np.all(np.isfinite(taus)) or np.any(np.abs(taus) > TAU_LIMIT):
        raise RangeError("tau outside the representable range")
    N, rows, n = coeffs.shape
    K = (rows - 1) // 2
    _, C, S, w = lp._basis(K, samples)
    a, b = coeffs[:, 1:K + 1], coeffs[:, K + 1:]
    X = coeffs[:, None, 0] + _synth(C, a) + _synth(S, b)
    V = _synth(C, w[:, None] * b) - _synth(S, w[:, None] * a)
    et, emt = np.exp(taus), np.exp(-taus)
    u = pot.eval_U(spec, X)
    dU = pot.eval_dU(spec, X)
    vv = np.sum(V * V, axis=-1)
    if chart is None or chart.is_flat:
        k = np.arange(1, K + 1)
        E = np.pi ** 2 * np.sum(k[:, None] ** 2 * (a ** 2 + b ** 2), axis=(1, 2))
        pair_dot = emt[:, None, None] * V
        pair_val = et[:, None, None] * dU
    else:
        wgt = geo.conformal_weight(chart, X)
        dphi = chart.conformal.grad(X)
        E = 0.5 * np.mean(wgt * vv, axis=1)
        pair_dot = emt[:, None, None] * wgt[..., None] * V
        pair_val = emt[:, None, None] * (wgt * vv)[..., None] * dphi + et[:, None, None] * dU
    U = np.mean(u, axis=1)
    P = np.exp(-taus) + np.exp(0.5 * taus)
    dP = -np.exp(-taus) + 0.5 * np.exp(0.5 * taus)
    value = emt * E + et * U + eps * P
    A = _project_batch(pair_dot, K)
    B = _project_batch(pair_val, K)
    ww = w[None, :, None]
    field_ = np.empty_like(B)
    field_[:, 0] = B[:, 0]
    field_[:, 1:K + 1] = B[:, 1:K + 1] - ww * A[:, K + 1:]
    field_[:, K + 1:] = B[:, K + 1:] + ww * A[:, 1:K + 1]
    h1 = lp.h1_weights(K)[None, :, None]
    xi = field_ / h1
    dtau = -emt * E + et * U + eps * dP
    norm2 = np.sum(lp.l2_weights(K)[None, :, None] * h1 * xi * xi, axis=(1, 2)) + dtau ** 2
    grads = np.concatenate([xi.reshape(N, -1), dtau[:, None]], axis=1)
    return value, grads, np.sqrt(norm2)
