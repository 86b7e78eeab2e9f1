"""Compare the compiled and numpy planning kernels (and scipy's assignment solver).

    python benchmarks/bench_kernels.py [--sizes 50,150,300] [--repeat 5]
"""

import argparse
import time

import numpy as np
from scipy.optimize import linear_sum_assignment

from atomreload import _pykernels

try:
    from atomreload import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="25,100,300")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'n':>5} {'kernel':>18} {'cython_s':>10} {'python_s':>10} {'scipy_s':>10} {'speedup':>8}")
    for n in map(int, args.sizes.split(",")):
        cost = rng.random((n, 2 * n)) * 100
        tp = best_of(lambda: _pykernels.solve_assignment(cost), args.repeat)
        ts = best_of(lambda: linear_sum_assignment(cost), args.repeat)
        tc = best_of(lambda: _ckernels.solve_assignment(cost), args.repeat) if _ckernels else float("nan")
        print(f"{n:>5} {'solve_assignment':>18} {tc:>10.5f} {tp:>10.5f} {ts:>10.5f} {tp / tc:>8.1f}")

        side = int(np.sqrt(n * 4)) + 1
        r, c = np.divmod(np.arange(side * side), side)
        xs, ys = c * 3.3, r * 3.3
        cand = (rng.random(xs.size) < 0.98).astype(np.uint8)
        path = np.array([[-3.3, 0.0], [-3.3, 50.0], [side * 3.3, 50.0], [side * 3.3, 40.0]])
        tp = best_of(lambda: _pykernels.close_sites(path, xs, ys, cand, 1.6), args.repeat)
        tc = best_of(lambda: _ckernels.close_sites(path, xs, ys, cand, 1.6), args.repeat) if _ckernels else float("nan")
        print(f"{xs.size:>5} {'close_sites':>18} {tc:>10.5f} {tp:>10.5f} {'-':>10} {tp / tc:>8.1f}")


if __name__ == "__main__":
    main()
