"""Time Fourier-series point evaluation with the compiled and numpy backends.

    python3 benchmarks/bench_kernels.py [--points 20000] [--K 16 32] [--repeat 5]

Prints one row per (grid, gradient) case with the best-of-``repeat`` wall time
of each backend, their ratio and the largest disagreement between them.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from vortexflow import kernels
from vortexflow.biot_savart import velocity_from_vorticity
from vortexflow.spectral import PeriodicGrid, random_field


def case(dim: int, K: int, points: int, with_grad: bool, repeat: int, seed: int = 0):
    grid = PeriodicGrid(dim, K)
    c = 1 if dim == 2 else 3
    omega = random_field(grid, c, seed, divergence_free=dim == 3)
    modes, coeffs = velocity_from_vorticity(omega).field.series()
    X = np.random.default_rng(seed).uniform(0, grid.L, size=(points, dim))
    timings, results = {}, {}
    for backend in ("python", "cython"):
        if backend == "cython" and kernels.BACKEND != "cython":
            continue

        def call(backend=backend):
            return kernels.eval_series(X, modes, coeffs, grid.L, with_grad, backend=backend)

        results[backend] = call()
        timings[backend] = min(timeit.repeat(call, number=1, repeat=repeat))
    gap = np.nan
    if len(results) == 2:
        gap = float(np.max(np.abs(results["python"][0] - results["cython"][0])))
    return timings, gap, len(modes)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--K", type=int, nargs="+", default=[16, 32])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{'dim':>3} {'K':>3} {'modes':>6} {'grad':>5} {'python[s]':>10} {'cython[s]':>10} {'speedup':>8} {'max diff':>9}")
    for dim in (2, 3):
        for K in args.K:
            if dim == 3 and K > 16:
                continue
            for with_grad in (False, True):
                t, gap, nm = case(dim, K, args.points, with_grad, args.repeat)
                py, cy = t["python"], t.get("cython", np.nan)
                print(f"{dim:>3} {K:>3} {nm:>6} {str(with_grad):>5} {py:>10.4f} {cy:>10.4f} {py / cy:>8.1f} {gap:>9.1e}")


if __name__ == "__main__":
    main()
