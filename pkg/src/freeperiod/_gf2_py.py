"""Pure-Python GF(2) column reduction; Python ints serve as bitset columns."""
import numpy as np


def gf2_rank(indptr, indices, n_rows):
    """Rank over GF(2) of a CSC 0/1 matrix (duplicate entries cancel)."""
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    pivots = {}
    rank = 0
    for c in range(len(indptr) - 1):
        col = 0
        for r in indices[indptr[c]:indptr[c + 1]].tolist():
            col ^= 1 << r
        while col:
            low = col.bit_length() - 1
            p = pivots.get(low)
            if p is None:
                pivots[low] = col
                rank += 1
                break
            col ^= p
    return rank
