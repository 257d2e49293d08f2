"""Shifted potentials U = E - V and sampled diagnostics of their hypotheses.

The negative set is ``{U > 0}``; motion at energy E is confined to its closure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import LinkingError, PotentialError
from .polynomial import Polynomial


@dataclass(frozen=True)
class PotentialSpec:
    """U with its coordinate gradient (a covector) and coordinate Hessian.

    Providers are vectorized over leading axes.  ``compact_radius`` is the
    radius of the ball about ``base_point`` outside of which the asymptotic
    conditions are probed.
    """

    dimension: int
    U: Callable
    gradU: Callable
    hessU: Callable
    base_point: tuple = None
    compact_radius: float = 1.0
    builtin_tag: Optional[str] = None
    energy: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.base_point is None:
            object.__setattr__(self, "base_point", (0.0,) * self.dimension)
        if len(self.base_point) != self.dimension:
            raise PotentialError("base point dimension mismatch")
        if self.compact_radius <= 0:
            raise PotentialError("compact_radius must be positive")


def _call(provider, q, what):
    try:
        out = provider(q)
    except Exception as exc:  # provider bugs surface with context
        raise PotentialError(f"{what} provider failed: {exc}") from exc
    return np.asarray(out, dtype=float)


# -- builtin problems --------------------------------------------------------

def harmonic2d(energy: float = 1.0, **kw) -> PotentialSpec:
    return PotentialSpec(
        dimension=2,
        U=lambda q: energy - 0.5 * np.sum(np.asarray(q) ** 2, axis=-1),
        gradU=lambda q: -np.asarray(q, dtype=float),
        hessU=lambda q: np.broadcast_to(-np.eye(2), np.shape(q)[:-1] + (2, 2)).copy(),
        builtin_tag="harmonic2d", energy=energy, **kw)


def well1d(energy: float = 1.0, **kw) -> PotentialSpec:
    return PotentialSpec(
        dimension=1,
        U=lambda q: energy - np.asarray(q)[..., 0] ** 2,
        gradU=lambda q: -2.0 * np.asarray(q, dtype=float),
        hessU=lambda q: np.full(np.shape(q)[:-1] + (1, 1), -2.0),
        builtin_tag="well1d", energy=energy, **kw)


def annulus2d(energy: float = 0.0, **kw) -> PotentialSpec:
    def U(q):
        s = np.sum(np.asarray(q) ** 2, axis=-1)
        return energy - 0.25 * (s - 1.0) * (s - 4.0)

    def gradU(q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1, keepdims=True)
        return -(s - 2.5) * q

    def hessU(q):
        q = np.asarray(q, dtype=float)
        s = np.sum(q * q, axis=-1)[..., None, None]
        return -(s - 2.5) * np.eye(2) - 2.0 * q[..., :, None] * q[..., None, :]

    return PotentialSpec(2, U, gradU, hessU, builtin_tag="annulus2d", energy=energy, **kw)


def cosine2d(energy: float = 1.0, periods=(2 * np.pi, 2 * np.pi), **kw) -> PotentialSpec:
    """Periodic well V = sum(1 - cos(2 pi q_i / L_i)); the natural partner of a flat torus."""
    w = 2.0 * np.pi / np.asarray(periods, dtype=float)

    def U(q):
        q = np.asarray(q, dtype=float)
        return energy - np.sum(1.0 - np.cos(w * q), axis=-1)

    def gradU(q):
        return -w * np.sin(w * np.asarray(q, dtype=float))

    def hessU(q):
        d = -(w ** 2) * np.cos(w * np.asarray(q, dtype=float))
        return d[..., :, None] * np.eye(2)

    return PotentialSpec(2, U, gradU, hessU, builtin_tag="cosine2d", energy=energy,
                         params={"periods": list(map(float, periods))}, **kw)


def polynomial(coeffs: dict, dimension: int, energy: float = 0.0, **kw) -> PotentialSpec:
    """U = E - V with V given by exponent-keyed coefficients."""
    V = Polynomial.from_mapping(coeffs, dimension)
    return PotentialSpec(
        dimension,
        U=lambda q: energy - V.value(q),
        gradU=lambda q: -V.gradient(q),
        hessU=lambda q: -V.hessian(q),
        builtin_tag=None, energy=energy, params={"polynomial": V.to_mapping()}, **kw)


BUILTINS = {"harmonic2d": harmonic2d, "well1d": well1d, "annulus2d": annulus2d,
            "cosine2d": cosine2d}


# -- evaluation ----------------------------------------------------------------

def eval_U(spec: PotentialSpec, q) -> np.ndarray:
    return _call(spec.U, q, "U")


def eval_dU(spec: PotentialSpec, q) -> np.ndarray:
    """Coordinate differential (covector components)."""
    return _call(spec.gradU, q, "gradU")


def eval_gradU(spec: PotentialSpec, chart, q) -> np.ndarray:
    return geo.metric_gradient(chart, q, eval_dU(spec, q))


def eval_hessU(spec: PotentialSpec, q, chart=None) -> np.ndarray:
    """Coordinate Hessian; covariant (Christoffel-corrected) for conformal charts."""
    H = _call(spec.hessU, q, "hessU")
    if chart is not None and not chart.is_flat:
        gamma = geo.christoffel(chart, q)
        H = H - np.einsum("...kij,...k->...ij", gamma, eval_dU(spec, q))
    return H


def grad_norm(spec, chart, q) -> np.ndarray:
    return geo.metric_norm(chart, q, eval_gradU(spec, chart, q))


def hess_norm(spec, chart, q) -> np.ndarray:
    """Operator norm of the (1,1) Hessian tensor."""
    H = eval_hessU(spec, q, chart)
    norms = np.linalg.norm(H, ord=2, axis=(-2, -1))
    return norms / geo.conformal_weight(chart, q)


def qb_function(spec, chart, q) -> np.ndarray:
    """U / sqrt(1 + |grad U|^2): same sign as U, never larger in modulus."""
    return eval_U(spec, q) / np.sqrt(1.0 + grad_norm(spec, chart, q) ** 2)


# -- sampling helpers ----------------------------------------------------------

def grid_axes(chart, bbox, grid_n):
    """Node coordinates per axis; ``grid_n`` cells per axis (periodic axes drop the end node)."""
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bbox)
    if lo.size != chart.dimension or hi.size != chart.dimension:
        raise PotentialError("bbox dimension mismatch")
    periodic = chart.family == geo.FLAT_TORUS
    axes = []
    for i in range(chart.dimension):
        ax = np.linspace(lo[i], hi[i], grid_n + 1)
        axes.append(ax[:-1] if periodic else ax)
    return axes


def grid_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def level_crossings(values, points, periodic=False):
    """Linear-interpolated points where ``values`` changes strict sign along grid edges,
    together with grid nodes where it vanishes exactly."""
    out = [points[values == 0.0]]
    n = points.shape[-1]
    for axis in range(n):
        a = values
        b = np.roll(values, -1, axis=axis)
        pa = points
        pb = np.roll(points, -1, axis=axis)
        mask = (a * b) < 0
        if not periodic:
            idx = [slice(None)] * n
            idx[axis] = slice(-1, None)
            mask[tuple(idx)] = False
        else:
            # wrapped neighbours live one period away in the universal cover
            idx = [slice(None)] * n
            idx[axis] = slice(-1, None)
            pb = pb.copy()
            h = (np.take(points, 1, axis=axis) - np.take(points, 0, axis=axis)).reshape(-1, n)[0]
            pb[tuple(idx)] = pb[tuple(idx)] + h * values.shape[axis]
        t = a[mask] / (a[mask] - b[mask])
        out.append(pa[mask] + t[:, None] * (pb[mask] - pa[mask]))
    return np.concatenate(out, axis=0)


# -- hypothesis diagnostics ----------------------------------------------------

@dataclass
class HypothesisReport:
    reg_ok: Optional[bool] = None
    reg_min_grad: Optional[float] = None
    ac1a_min_grad: Optional[float] = None
    ac1b_max_ratio: Optional[float] = None
    ac2_trend: list = field(default_factory=list)
    ac2_consistent: Optional[bool] = None
    lnk_betti: list = field(default_factory=list)
    lnk_ok: Optional[bool] = None
    geometry: Optional[dict] = None
    notes: list = field(default_factory=list)

    def merge(self, other: "HypothesisReport") -> "HypothesisReport":
        for name in self.__dataclass_fields__:
            value = getattr(other, name)
            if name == "notes":
                self.notes.extend(value)
            elif value not in (None, []):
                setattr(self, name, value)
        return self

    @property
    def all_ok(self) -> bool:
        return bool(self.reg_ok) and self.lnk_ok is not False and (
            self.ac1a_min_grad is None or self.ac1a_min_grad > 0)

    def to_dict(self):
        return {
            "reg_ok": self.reg_ok,
            "reg_min_grad": self.reg_min_grad,
            "ac1a_min_grad": self.ac1a_min_grad,
            "ac1b_max_ratio": self.ac1b_max_ratio,
            "ac2_trend": [[float(r), float(v)] for r, v in self.ac2_trend],
            "ac2_consistent": self.ac2_consistent,
            "lnk_betti": list(self.lnk_betti),
            "lnk_ok": self.lnk_ok,
            "geometry": self.geometry,
            "notes": list(self.notes),
        }


def default_tol_grad(spec, chart, bbox, grid_n=64) -> float:
    axes = grid_axes(chart, bbox, grid_n)
    Q = grid_points(axes)
    umax = float(np.max(np.abs(eval_U(spec, Q))))
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bbox)
    return 1e-3 * umax / float(np.linalg.norm(hi - lo))


def check_reg(spec, chart, bbox, grid_n=64, tol_grad=None) -> HypothesisReport:
    """Sampled test that 0 is a regular value of U and the zero level is nonempty."""
    if grid_n < 8:
        raise PotentialError("check_reg needs grid_n >= 8")
    if tol_grad is None:
        tol_grad = default_tol_grad(spec, chart, bbox, grid_n)
    axes = grid_axes(chart, bbox, grid_n)
    Q = grid_points(axes)
    zeros = level_crossings(eval_U(spec, Q), Q, periodic=chart.family == geo.FLAT_TORUS)
    if len(zeros) == 0:
        return HypothesisReport(reg_ok=False, notes=["zero level empty in box"])
    g = float(np.min(grad_norm(spec, chart, zeros)))
    report = HypothesisReport(reg_ok=g >= tol_grad, reg_min_grad=g)
    if g < tol_grad:
        report.notes.append(f"gradient {g:.3g} below {tol_grad:.3g} on the zero level")
    return report


def _sphere_directions(n, count):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    # Fibonacci-like lattice via a fixed low-discrepancy sequence
    rng = np.random.default_rng(12345)
    d = rng.normal(size=(count, n))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def check_asymptotic(spec, chart, radii, samples_per_shell=64) -> HypothesisReport:
    """Per-shell minimum of |grad U| and maximum of |Hess U|/|grad U|.

    Sampling only; ratios that decrease towards zero are reported as
    consistent with vanishing relative Hessian growth.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise PotentialError("radii must be strictly increasing")
    if any(r <= spec.compact_radius for r in radii):
        raise PotentialError("all radii must exceed compact_radius")
    dirs = _sphere_directions(spec.dimension, samples_per_shell)
    o = np.asarray(spec.base_point, dtype=float)
    report = HypothesisReport(notes=["asymptotic conditions sampled, not certified"])
    min_grad = np.inf
    trend = []
    for r in radii:
        Q = o + r * dirs
        g = grad_norm(spec, chart, Q)
        h = hess_norm(spec, chart, Q)
        min_grad = min(min_grad, float(np.min(g)))
        if np.min(g) <= 1e-14:
            report.notes.append(f"gradient vanishes on shell r={r:g}")
            trend.append((r, np.inf))
        else:
            trend.append((r, float(np.max(h / g))))
    report.ac1a_min_grad = min_grad
    report.ac1b_max_ratio = max(v for _, v in trend)
    report.ac2_trend = trend
    vals = [v for _, v in trend]
    decreasing = all(b <= a for a, b in zip(vals, vals[1:])) and vals[-1] < vals[0]
    report.ac2_consistent = decreasing or max(vals) == 0.0
    return report


def isotopy_threshold(spec, chart, bbox, grid_n=64, tol_grad=None) -> float:
    """Largest sampled |U| level below which no near-critical point of U occurs."""
    if tol_grad is None:
        tol_grad = default_tol_grad(spec, chart, bbox, grid_n)
    Q = grid_points(grid_axes(chart, bbox, grid_n)).reshape(-1, spec.dimension)
    u = np.abs(eval_U(spec, Q))
    g = grad_norm(spec, chart, Q)
    # near-critical nodes: small gradient relative to the local gradient scale of the grid
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bbox)
    h = float(np.max((hi - lo) / grid_n))
    hn = hess_norm(spec, chart, Q)
    crit = g <= np.maximum(tol_grad, hn * h)
    if not np.any(crit):
        return float(np.max(u))
    return float(np.min(u[crit]))


def estimate_qb_distance(spec, chart, delta, bbox, grid_n=256) -> float:
    """Sampled distance between the level {U = delta} and Q_B = {f > sqrt(2) delta}."""
    if delta <= 0:
        raise PotentialError("delta must be positive")
    axes = grid_axes(chart, bbox, grid_n)
    Q = grid_points(axes)
    periodic = chart.family == geo.FLAT_TORUS
    u = eval_U(spec, Q)
    if not np.any(u > 0):
        raise LinkingError("no zero level: negative set empty in box")
    if np.all(u > 0):
        raise LinkingError("no zero level: U positive on the whole box")
    f = qb_function(spec, chart, Q)
    thresh = np.sqrt(2.0) * delta
    inside = f > thresh
    if not np.any(inside):
        raise LinkingError("delta too large: Q_B is empty")
    level = level_crossings(u - delta, Q, periodic)
    qb_edge = level_crossings(f - thresh, Q, periodic)
    qb = np.concatenate([Q[inside], qb_edge], axis=0)
    if len(level) == 0:
        raise LinkingError("no zero level: {U = delta} not sampled")
    if chart.is_flat:
        boxsize = np.asarray(chart.periods) if periodic else None
        if periodic:
            lo = np.array([a[0] for a in axes])
            level = np.mod(level - lo, boxsize)
            qb = np.mod(qb - lo, boxsize)
        tree = cKDTree(qb, boxsize=boxsize)
        d, _ = tree.query(level)
        return float(np.min(d))
    return _graph_distance(spec, chart, axes, Q, u - delta, inside)


def _graph_distance(spec, chart, axes, Q, level_vals, inside):
    """Dijkstra on the 8-neighbour grid with conformal edge lengths."""
    shape = Q.shape[:-1]
    n_nodes = int(np.prod(shape))
    idx = np.arange(n_nodes).reshape(shape)
    rows, cols, w = [], [], []
    for di, dj in [(1, 0), (0, 1), (1, 1), (1, -1)]:
        a = idx[max(0, -di):shape[0] - max(0, di), max(0, -dj):shape[1] - max(0, dj)]
        b = idx[max(0, di):shape[0] + min(0, di) or None, max(0, dj):shape[1] + min(0, dj) or None]
        pa = Q.reshape(-1, 2)[a.ravel()]
        pb = Q.reshape(-1, 2)[b.ravel()]
        mid = 0.5 * (pa + pb)
        length = np.linalg.norm(pb - pa, axis=-1) * np.exp(chart.conformal.phi(mid))
        rows.append(a.ravel())
        cols.append(b.ravel())
        w.append(length)
    rows, cols, w = map(np.concatenate, (rows, cols, w))
    graph = coo_matrix((w, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    sources = np.flatnonzero(inside.ravel())
    dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
    # targets: nodes adjacent to a sign change of U - delta
    s = np.sign(level_vals)
    near = np.zeros(shape, dtype=bool)
    for axis in range(2):
        d = np.diff(s, axis=axis) != 0
        sl_a = [slice(None)] * 2
        sl_b = [slice(None)] * 2
        sl_a[axis] = slice(None, -1)
        sl_b[axis] = slice(1, None)
        near[tuple(sl_a)] |= d
        near[tuple(sl_b)] |= d
    near &= ~inside
    if not np.any(near):
        raise LinkingError("no zero level: {U = delta} not sampled")
    return float(np.min(dist.reshape(shape)[near]))
