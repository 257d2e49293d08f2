"""Configuration-space models: flat R^n, flat tori and conformal planes.

All field providers are vectorized: they take points of shape ``(..., n)``
and return arrays with the matching leading shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, GeometryError

EUCLIDEAN = "euclidean"
FLAT_TORUS = "flat_torus"
CONFORMAL_2D = "conformal2d"


@dataclass(frozen=True)
class ConformalFactor:
    """Scalar field phi with first and second derivatives; metric is exp(2 phi) * id."""

    phi: Callable
    grad: Callable
    hess: Callable

    @classmethod
    def constant(cls, value: float) -> "ConformalFactor":
        return cls(
            phi=lambda q: np.full(np.shape(q)[:-1], float(value)),
            grad=lambda q: np.zeros(np.shape(q)),
            hess=lambda q: np.zeros(np.shape(q) + (np.shape(q)[-1],)),
        )

    @classmethod
    def from_polynomial(cls, poly) -> "ConformalFactor":
        return cls(phi=poly.value, grad=poly.gradient, hess=poly.hessian)


@dataclass(frozen=True)
class MetricChart:
    dimension: int
    family: str = EUCLIDEAN
    periods: Optional[tuple] = None
    conformal: Optional[ConformalFactor] = field(default=None, compare=False)
    description: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError("dimension must be positive")
        if self.family == FLAT_TORUS:
            if self.periods is None or len(self.periods) != self.dimension:
                raise GeometryError("flat torus needs one period per axis")
            if min(self.periods) <= 0:
                raise GeometryError("flat torus periods must be strictly positive")
        elif self.family == CONFORMAL_2D:
            if self.dimension != 2:
                raise GeometryError("conformal2d charts are two-dimensional")
            if self.conformal is None:
                raise GeometryError("conformal2d chart needs a conformal factor")
        elif self.family != EUCLIDEAN:
            raise GeometryError(f"unknown metric family {self.family!r}")

    @property
    def is_flat(self) -> bool:
        return self.family != CONFORMAL_2D

    @classmethod
    def euclidean(cls, n: int) -> "MetricChart":
        return cls(n, EUCLIDEAN)

    @classmethod
    def flat_torus(cls, periods) -> "MetricChart":
        periods = tuple(float(p) for p in periods)
        return cls(len(periods), FLAT_TORUS, periods=periods)

    @classmethod
    def conformal2d(cls, factor: ConformalFactor) -> "MetricChart":
        return cls(2, CONFORMAL_2D, conformal=factor)


def _point(chart, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != chart.dimension:
        raise DomainError(f"point has {q.shape[-1]} components, chart is {chart.dimension}-dimensional")
    if not np.all(np.isfinite(q)):
        raise DomainError("non-finite point")
    return q


def conformal_weight(chart: MetricChart, q) -> np.ndarray:
    """exp(2 phi(q)), or ones for flat charts."""
    q = np.asarray(q, dtype=float)
    if chart.is_flat:
        return np.ones(q.shape[:-1])
    return np.exp(2.0 * chart.conformal.phi(q))


def metric_eval(chart: MetricChart, q) -> np.ndarray:
    q = _point(chart, q)
    eye = np.eye(chart.dimension)
    if chart.is_flat:
        return np.broadcast_to(eye, q.shape[:-1] + eye.shape).copy()
    return conformal_weight(chart, q)[..., None, None] * eye


def christoffel(chart: MetricChart, q) -> np.ndarray:
    """Gamma[..., i, j, k] of the Levi-Civita connection."""
    q = _point(chart, q)
    n = chart.dimension
    gamma = np.zeros(q.shape[:-1] + (n, n, n))
    if chart.is_flat:
        return gamma
    dphi = chart.conformal.grad(q)
    eye = np.eye(n)
    # delta^i_j d_k phi + delta^i_k d_j phi - delta_jk d^i phi
    gamma += eye[:, :, None] * dphi[..., None, None, :]
    gamma += eye[:, None, :] * dphi[..., None, :, None]
    gamma -= eye[None, :, :] * dphi[..., :, None, None]
    return gamma


def covariant_accel(chart: MetricChart, q, v, a) -> np.ndarray:
    """a^i + Gamma^i_jk(q) v^j v^k."""
    q = _point(chart, q)
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if chart.is_flat:
        return a.copy()
    dphi = chart.conformal.grad(q)
    # closed form of the conformal contraction: 2 v (dphi.v) - |v|^2 dphi
    dv = np.sum(dphi * v, axis=-1, keepdims=True)
    vv = np.sum(v * v, axis=-1, keepdims=True)
    return a + 2.0 * dv * v - vv * dphi


def metric_gradient(chart: MetricChart, q, dU) -> np.ndarray:
    """Raise the index of a covector: g(q)^-1 dU."""
    q = _point(chart, q)
    dU = np.asarray(dU, dtype=float)
    if chart.is_flat:
        return dU.copy()
    w = conformal_weight(chart, q)
    if not np.all(np.isfinite(w)) or np.any(w <= np.finfo(float).tiny):
        raise GeometryError("metric is numerically singular")
    return dU / w[..., None]


def metric_norm(chart: MetricChart, q, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.sqrt(conformal_weight(chart, q) * np.sum(v * v, axis=-1))


@dataclass
class GeometryReport:
    inj: float
    curvature_bound: float
    curvature_gradient_bound: float
    certified: bool
    note: str = ""

    def to_dict(self):
        return {
            "inj": None if np.isnan(self.inj) else (self.inj if np.isfinite(self.inj) else "inf"),
            "curvature_bound": self.curvature_bound,
            "curvature_gradient_bound": self.curvature_gradient_bound,
            "certified": self.certified,
            "note": self.note,
        }


def check_bounded_geometry(chart: MetricChart, bbox, grid_n: int = 32) -> GeometryReport:
    """Injectivity radius and curvature bounds; exact for flat charts, sampled otherwise."""
    if chart.family == EUCLIDEAN:
        return GeometryReport(np.inf, 0.0, 0.0, True, "flat")
    if chart.family == FLAT_TORUS:
        return GeometryReport(0.5 * min(chart.periods), 0.0, 0.0, True, "flat torus")
    if grid_n < 2:
        raise DomainError("grid_n must be at least 2")
    lo, hi = np.asarray(bbox, dtype=float)
    axes = [np.linspace(lo[i], hi[i], grid_n) for i in range(2)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    Q = np.stack([X, Y], axis=-1)
    phi = chart.conformal.phi(Q)
    lap = np.trace(chart.conformal.hess(Q), axis1=-2, axis2=-1)
    K = -np.exp(-2.0 * phi) * lap
    dK = np.stack(np.gradient(K, axes[0], axes[1]), axis=-1)
    gradK = np.exp(-phi) * np.linalg.norm(dK, axis=-1)
    return GeometryReport(
        inj=np.nan,
        curvature_bound=float(np.max(np.abs(K))),
        curvature_gradient_bound=float(np.max(gradK)),
        certified=False,
        note="sampled, not certified",
    )
