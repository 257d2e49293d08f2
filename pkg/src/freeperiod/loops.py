"""Truncated Fourier loops x: S^1 -> R^n and the functionals built on them.

A loop with K modes stores its coefficients as a ``(2K+1, n)`` array: row 0
is the mean a_0, rows 1..K the cosine coefficients a_k and rows K+1..2K the
sine coefficients b_k of

    x(t) = a_0 + sum_k a_k cos(2 pi k t) + b_k sin(2 pi k t).

Tangent fields along a loop ("Fourier fields") use the same layout.
Quadrature is the rectangle rule on M uniform nodes t_j = j / M.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import geometry as geo
from . import potential as pot
from .errors import ShapeError

DEFAULT_MODES = 32
DEFAULT_SAMPLES = 256


@lru_cache(maxsize=32)
def _basis(K: int, M: int):
    t = np.arange(M) / M
    k = np.arange(1, K + 1)
    ang = 2.0 * np.pi * np.outer(t, k)
    C, S = np.cos(ang), np.sin(ang)
    w = 2.0 * np.pi * k
    for arr in (C, S, w):
        arr.setflags(write=False)
    return t, C, S, w


def mode_numbers(K: int) -> np.ndarray:
    """Wave number of every coefficient row."""
    k = np.arange(1, K + 1)
    return np.concatenate([[0], k, k])


def h1_weights(K: int) -> np.ndarray:
    return 1.0 + (2.0 * np.pi * mode_numbers(K)) ** 2


def l2_weights(K: int) -> np.ndarray:
    """Parseval weights: 1 for the mean, 1/2 for each trigonometric coefficient."""
    w = np.full(2 * K + 1, 0.5)
    w[0] = 1.0
    return w


@dataclass(frozen=True)
class FourierLoop:
    coeffs: np.ndarray
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] % 2 != 1:
            raise ShapeError("coefficients must have shape (2K+1, n)")
        if not np.all(np.isfinite(c)):
            raise ShapeError("non-finite loop coefficients")
        K = (c.shape[0] - 1) // 2
        if self.samples < 4 * K + 1:
            raise ShapeError(f"need at least 4K+1 = {4 * K + 1} quadrature nodes, got {self.samples}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def modes(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def dimension(self) -> int:
        return self.coeffs.shape[1]

    @property
    def a0(self):
        return self.coeffs[0]

    @property
    def a(self):
        return self.coeffs[1:self.modes + 1]

    @property
    def b(self):
        return self.coeffs[self.modes + 1:]

    def with_coeffs(self, coeffs) -> "FourierLoop":
        return FourierLoop(np.asarray(coeffs, dtype=float).reshape(self.coeffs.shape), self.samples)

    # -- construction ---------------------------------------------------------

    @classmethod
    def zeros(cls, n, K=DEFAULT_MODES, M=DEFAULT_SAMPLES):
        return cls(np.zeros((2 * K + 1, n)), M)

    @classmethod
    def constant(cls, point, K=DEFAULT_MODES, M=DEFAULT_SAMPLES):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        c = np.zeros((2 * K + 1, point.size))
        c[0] = point
        return cls(c, M)

    @classmethod
    def from_modes(cls, a0, a=(), b=(), K=DEFAULT_MODES, M=DEFAULT_SAMPLES):
        """Build from leading cosine/sine coefficient lists (padded with zeros)."""
        a0 = np.atleast_1d(np.asarray(a0, dtype=float))
        c = np.zeros((2 * K + 1, a0.size))
        c[0] = a0
        for k, v in enumerate(a, start=1):
            c[k] = v
        for k, v in enumerate(b, start=1):
            c[K + k] = v
        return cls(c, M)

    @classmethod
    def from_samples(cls, X, K=DEFAULT_MODES, M=None):
        """Discrete Fourier projection of uniformly sampled points (rows of X)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return cls(project(X, K), M if M is not None else max(X.shape[0], 4 * K + 1))

    # -- evaluation ---------------------------------------------------------------

    def nodes(self):
        """Positions, velocities and accelerations at the quadrature nodes."""
        _, C, S, w = _basis(self.modes, self.samples)
        a, b = self.a, self.b
        X = self.a0 + C @ a + S @ b
        V = C @ (w[:, None] * b) - S @ (w[:, None] * a)
        A = -(C @ ((w ** 2)[:, None] * a) + S @ ((w ** 2)[:, None] * b))
        return X, V, A

    def positions(self):
        _, C, S, _ = _basis(self.modes, self.samples)
        return self.a0 + C @ self.a + S @ self.b

    def to_json(self) -> str:
        return json.dumps({"modes": self.modes, "samples": self.samples,
                           "coefficients": self.coeffs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FourierLoop":
        d = json.loads(text)
        return cls(np.asarray(d["coefficients"], dtype=float), int(d["samples"]))


def project(F, K) -> np.ndarray:
    """Fourier coefficients (modes <= K) of a field sampled on uniform nodes."""
    F = np.asarray(F, dtype=float)
    M = F.shape[0]
    if M < 2 * K + 1:
        raise ShapeError("too few samples to resolve the requested modes")
    _, C, S, _ = _basis(K, M)
    out = np.empty((2 * K + 1,) + F.shape[1:])
    out[0] = F.mean(axis=0)
    out[1:K + 1] = (2.0 / M) * (C.T @ F)
    out[K + 1:] = (2.0 / M) * (S.T @ F)
    return out


def eval_loop(x: FourierLoop, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    k = np.arange(1, x.modes + 1)
    ang = 2.0 * np.pi * np.multiply.outer(t, k)
    return x.a0 + np.cos(ang) @ x.a + np.sin(ang) @ x.b


def eval_velocity(x: FourierLoop, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    k = np.arange(1, x.modes + 1)
    w = 2.0 * np.pi * k
    ang = 2.0 * np.pi * np.multiply.outer(t, k)
    return np.cos(ang) @ (w[:, None] * x.b) - np.sin(ang) @ (w[:, None] * x.a)


def time_shift(x: FourierLoop, theta: float) -> FourierLoop:
    """The loop t -> x(t + theta)."""
    K = x.modes
    ph = 2.0 * np.pi * np.arange(1, K + 1) * theta
    c, s = np.cos(ph)[:, None], np.sin(ph)[:, None]
    out = x.coeffs.copy()
    out[1:K + 1] = x.a * c + x.b * s
    out[K + 1:] = x.b * c - x.a * s
    return x.with_coeffs(out)


def energy(x: FourierLoop, chart=None) -> float:
    """(1/2) int |x'|_g^2 dt; Parseval for flat charts, quadrature otherwise."""
    if chart is None or chart.is_flat:
        k = np.arange(1, x.modes + 1)
        return float(np.pi ** 2 * np.sum(k[:, None] ** 2 * (x.a ** 2 + x.b ** 2)))
    X, V, _ = x.nodes()
    return float(0.5 * np.mean(geo.conformal_weight(chart, X) * np.sum(V * V, axis=-1)))


def potential_integral(x: FourierLoop, spec) -> float:
    return float(np.mean(pot.eval_U(spec, x.positions())))


def _check_pair(xi, eta):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if xi.shape != eta.shape or xi.ndim != 2 or xi.shape[0] % 2 != 1:
        raise ShapeError(f"Fourier field shapes differ: {xi.shape} vs {eta.shape}")
    return xi, eta


def l2_pairing(w, xi) -> float:
    """int <w, xi> dt for Fourier fields (Parseval)."""
    w, xi = _check_pair(w, xi)
    K = (w.shape[0] - 1) // 2
    return float(np.sum(l2_weights(K)[:, None] * w * xi))


def h1_inner(xi, eta) -> float:
    """int <xi, eta> + int <xi', eta'> in the flat Parseval form."""
    xi, eta = _check_pair(xi, eta)
    K = (xi.shape[0] - 1) // 2
    return float(np.sum((l2_weights(K) * h1_weights(K))[:, None] * xi * eta))


def precondition(w) -> np.ndarray:
    """H^1 representative of an L^2 field: divide mode k by 1 + (2 pi k)^2."""
    w = np.asarray(w, dtype=float)
    K = (w.shape[0] - 1) // 2
    return w / h1_weights(K)[:, None]
