"""Mod-2 relative homology of the cubical pair approximating (N_delta, dN_delta).

Cells live on a grid in doubled coordinates: a vertex (i, j) is (2i, 2j), an
edge along the first axis is (2i+1, 2j), a square (2i+1, 2j+1), and so on.
The dimension of a cell is the number of odd coordinates.  Periodic axes
wrap their doubled coordinate modulo twice the number of cells.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import potential as pot
from ._kernels import gf2_rank
from .errors import HomologyError


@dataclass
class CubicalPair:
    """Top cells of the interior plus the boundary subcomplex, on a fixed grid.

    ``cells[k]`` and ``boundary[k]`` are sorted arrays of encoded k-cells of the
    closure and of the boundary subcomplex respectively.
    """

    shape: tuple  # cells per axis
    periodic: tuple
    interior: np.ndarray  # boolean mask over top cells
    cells: list
    boundary: list

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def doubled_shape(self):
        return tuple(2 * s if p else 2 * s + 1 for s, p in zip(self.shape, self.periodic))

    def relative_cells(self, k):
        return np.setdiff1d(self.cells[k], self.boundary[k], assume_unique=True)

    def relative_counts(self):
        return [len(self.relative_cells(k)) for k in range(self.dimension + 1)]

    @classmethod
    def from_mask(cls, interior, periodic=None, allow_touching=False) -> "CubicalPair":
        """Pair generated by a boolean mask of top cells."""
        interior = np.asarray(interior, dtype=bool)
        n = interior.ndim
        periodic = tuple(periodic) if periodic is not None else (False,) * n
        shape = interior.shape
        if not allow_touching:
            for axis in range(n):
                if periodic[axis]:
                    continue
                if np.any(np.take(interior, 0, axis=axis)) or np.any(np.take(interior, -1, axis=axis)):
                    raise HomologyError(
                        "box too small: the negative set touches the grid boundary")
        dshape = tuple(2 * s if p else 2 * s + 1 for s, p in zip(shape, periodic))
        top = np.argwhere(interior)
        top_doubled = 2 * top + 1

        closure = _faces_closure(top_doubled, dshape, periodic)
        # codimension-one faces shared by exactly one interior cell form the topological boundary
        facets = []
        for axis in range(n):
            for sign in (-1, 1):
                f = top_doubled.copy()
                f[:, axis] += sign
                facets.append(_wrap(f, dshape, periodic))
        facets = np.concatenate(facets, axis=0) if facets else np.empty((0, n), int)
        codes = _encode(facets, dshape)
        uniq, counts = np.unique(codes, return_counts=True)
        single = uniq[counts == 1]
        bnd = _faces_closure(_decode(single, dshape), dshape, periodic)

        cells = [_select_dim(closure, dshape, k) for k in range(n + 1)]
        boundary = [_select_dim(bnd, dshape, k) for k in range(n + 1)]
        return cls(shape, periodic, interior, cells, boundary)


def _wrap(cells, dshape, periodic):
    for axis, p in enumerate(periodic):
        if p:
            cells[:, axis] %= dshape[axis]
    return cells


def _encode(cells, dshape):
    if len(cells) == 0:
        return np.empty(0, dtype=np.int64)
    return np.ravel_multi_index(tuple(cells.T), dshape).astype(np.int64)


def _decode(codes, dshape):
    return np.stack(np.unravel_index(codes, dshape), axis=-1)


def _faces_closure(cells, dshape, periodic):
    """Encoded codes of all faces (including the cells themselves)."""
    n = len(dshape)
    if len(cells) == 0:
        return np.empty(0, dtype=np.int64)
    odd = (cells % 2 == 1)
    out = []
    for offs in itertools.product((-1, 0, 1), repeat=n):
        offs = np.array(offs)
        # only odd coordinates may move
        ok = np.all(odd | (offs == 0), axis=1)
        if not np.any(ok):
            continue
        f = cells[ok] + offs
        out.append(_encode(_wrap(f, dshape, periodic), dshape))
    return np.unique(np.concatenate(out))


def _select_dim(codes, dshape, k):
    if len(codes) == 0:
        return codes
    dims = np.sum(_decode(codes, dshape) % 2, axis=1)
    return np.sort(codes[dims == k])


def build_cubical_pair(spec, chart, delta, bbox, grid_n=64) -> CubicalPair:
    """Corner test: a top cell is interior when U > delta at all of its corners."""
    axes = pot.grid_axes(chart, bbox, grid_n)
    Q = pot.grid_points(axes)
    u = pot.eval_U(spec, Q)
    periodic = chart.family == geo.FLAT_TORUS
    n = spec.dimension
    above = u > delta
    inside = np.ones(tuple(grid_n for _ in range(n)), dtype=bool)
    for corner in itertools.product((0, 1), repeat=n):
        shifted = above
        for axis, c in enumerate(corner):
            if c:
                shifted = np.roll(shifted, -1, axis=axis)
        if not periodic:
            shifted = shifted[tuple(slice(0, grid_n) for _ in range(n))]
        inside &= shifted
    if not np.any(inside):
        raise HomologyError("negative set empty at this delta and resolution")
    return CubicalPair.from_mask(inside, periodic=(periodic,) * n)


def boundary_matrix(pair: CubicalPair, k: int):
    """CSC data (indptr, indices, n_rows) of the relative boundary map C_k -> C_{k-1}."""
    cols = pair.relative_cells(k)
    rows = pair.relative_cells(k - 1)
    dshape = pair.doubled_shape
    row_index = {int(c): i for i, c in enumerate(rows)}
    cells = _decode(cols, dshape)
    indptr = [0]
    indices = []
    n = pair.dimension
    for cell in cells:
        entries = []
        for axis in range(n):
            if cell[axis] % 2 == 0:
                continue
            for sign in (-1, 1):
                f = cell.copy()
                f[axis] += sign
                if pair.periodic[axis]:
                    f[axis] %= dshape[axis]
                r = row_index.get(int(np.ravel_multi_index(tuple(f), dshape)))
                if r is not None:
                    entries.append(r)
        entries.sort()
        # a face hit twice (a one-cell periodic axis) cancels mod 2
        reduced = [e for e in entries if entries.count(e) % 2 == 1]
        indices.extend(sorted(set(reduced)))
        indptr.append(len(indices))
    return (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64), len(rows))


def relative_betti_mod2(pair: CubicalPair) -> list:
    n = pair.dimension
    counts = pair.relative_counts()
    ranks = [0] * (n + 2)  # ranks[k] = rank of d_k, with d_0 = d_{n+1} = 0
    for k in range(1, n + 1):
        indptr, indices, n_rows = boundary_matrix(pair, k)
        ranks[k] = int(gf2_rank(indptr, indices, n_rows)) if n_rows and len(indptr) > 1 else 0
    return [counts[k] - ranks[k] - ranks[k + 1] for k in range(n + 1)]


def euler_characteristic(betti) -> int:
    return sum((-1) ** k * b for k, b in enumerate(betti))


def check_lnk(betti) -> bool:
    """Nontrivial relative homology in some degree 1..n."""
    return any(b != 0 for b in list(betti)[1:])
