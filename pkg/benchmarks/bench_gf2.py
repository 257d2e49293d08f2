"""Compiled vs pure-Python GF(2) rank on cubical boundary matrices.

    python benchmarks/bench_gf2.py [--grid 64 128 256] [--repeat 3]
"""
import argparse
import time

from freeperiod import _gf2_py
from freeperiod import geometry as geo
from freeperiod import homology as hom
from freeperiod import potential as pot

try:
    from freeperiod import _gf2
except ImportError:
    _gf2 = None


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    spec, chart = pot.annulus2d(), geo.MetricChart.euclidean(2)
    box = ([-3.0, -3.0], [3.0, 3.0])
    if _gf2 is None:
        print("compiled kernel not built; timing the Python kernel only")
    print(f"{'grid':>5} {'k':>2} {'cols':>8} {'rank':>7} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for n in args.grid:
        pair = hom.build_cubical_pair(spec, chart, 0.05, box, n)
        for k in (1, 2):
            mat = hom.boundary_matrix(pair, k)
            tp, rp = best_of(_gf2_py.gf2_rank, mat, args.repeat)
            line = f"{n:5d} {k:2d} {len(mat[0]) - 1:8d} {rp:7d} {tp:10.4f}"
            if _gf2 is not None:
                tc, rc = best_of(_gf2.gf2_rank, mat, args.repeat)
                assert rc == rp, "kernels disagree"
                line += f" {tc:10.4f} {tp / tc:8.1f}"
            print(line)


if __name__ == "__main__":
    main()
