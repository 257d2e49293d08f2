"""Sparse multivariate polynomials with vectorized value, gradient and Hessian.

Config files describe polynomials as a map from exponent strings to
coefficients, e.g. ``{"0,0": 1.0, "2,0": -0.5, "0,2": -0.5}`` for
``1 - x^2/2 - y^2/2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Polynomial:
    exponents: np.ndarray  # (terms, n) nonnegative ints
    coefficients: np.ndarray  # (terms,)

    @property
    def dimension(self) -> int:
        return self.exponents.shape[1]

    @classmethod
    def from_mapping(cls, coeffs: dict, dimension: int) -> "Polynomial":
        exps, vals = [], []
        for key, value in coeffs.items():
            try:
                exp = tuple(int(p) for p in str(key).split(","))
            except ValueError:
                raise ConfigError(f"bad exponent key {key!r}") from None
            if len(exp) != dimension or min(exp) < 0:
                raise ConfigError(
                    f"exponent key {key!r} must list {dimension} nonnegative integers")
            exps.append(exp)
            vals.append(float(value))
        if not exps:
            exps, vals = [(0,) * dimension], [0.0]
        return cls(np.array(exps, dtype=int), np.array(vals, dtype=float))

    def to_mapping(self) -> dict:
        return {",".join(str(int(e)) for e in exp): float(c)
                for exp, c in zip(self.exponents, self.coefficients)}

    def _monomials(self, q, shift):
        # product over axes of q_i ** (e_i - shift_i); zero where the exponent goes negative
        e = self.exponents - shift
        out = np.ones(q.shape[:-1] + (len(self.coefficients),))
        for i in range(self.dimension):
            ei = e[:, i]
            powed = np.where(ei >= 0, q[..., i:i + 1] ** np.maximum(ei, 0), 0.0)
            out = out * powed
        return out

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return self._monomials(q, 0) @ self.coefficients

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        n = self.dimension
        cols = []
        for i in range(n):
            shift = np.zeros(n, dtype=int)
            shift[i] = 1
            cols.append(self._monomials(q, shift) @ (self.coefficients * self.exponents[:, i]))
        return np.stack(cols, axis=-1)

    def hessian(self, q):
        q = np.asarray(q, dtype=float)
        n = self.dimension
        out = np.empty(q.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(i, n):
                shift = np.zeros(n, dtype=int)
                shift[i] += 1
                shift[j] += 1
                if i == j:
                    factor = self.exponents[:, i] * (self.exponents[:, i] - 1)
                else:
                    factor = self.exponents[:, i] * self.exponents[:, j]
                val = self._monomials(q, shift) @ (self.coefficients * factor)
                out[..., i, j] = val
                out[..., j, i] = val
        return out
