#!/usr/bin/env python3
"""Benchmark the numba coordinate-descent kernel against the numpy fallback.

Times a full warm-started lambda path on a synthetic standardized problem at
a few sizes and prints a speedup table. Run with HEDONIC_NO_NUMBA=1 to
confirm the dispatch flag flips the active path.

Usage: python3 benchmarks/bench_coordinate_descent.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from hedonic_fusion import _kernels

SIZES = [(1000, 100), (4000, 250), (6000, 400)]
GRID_POINTS = 20


def make_problem(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=1)
    beta = np.zeros(p)
    beta[rng.choice(p, p // 10, replace=False)] = rng.normal(size=p // 10)
    y = X @ beta + rng.normal(size=n)
    yc = y - y.mean()
    lam_max = np.abs(X.T @ yc).max() / n
    grid = np.geomspace(lam_max, lam_max * 1e-2, GRID_POINTS)
    return np.asfortranarray(X), yc, grid


def run_path(impl, X, yc, grid):
    p = X.shape[1]
    beta = np.zeros(p)
    total_cycles = 0
    for lam in grid:
        beta, _, cycles, _, ok = impl(X, yc, float(lam), beta.copy(), 1e-7, 10_000)
        assert ok
        total_cycles += cycles
    return beta, total_cycles


def bench(impl, X, yc, grid, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        beta, cycles = run_path(impl, X, yc, grid)
        best = min(best, time.perf_counter() - t0)
    return best, beta, cycles


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if _kernels.USING_NUMBA:
        _kernels.warmup()
        print("active path: numba (set HEDONIC_NO_NUMBA=1 for numpy only)\n")
    else:
        print("active path: numpy fallback\n")

    print(f"{'n':>6} {'p':>5} {'cycles':>7} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}")
    for n, p in SIZES:
        X, yc, grid = make_problem(n, p, seed=n + p)
        t_np, b_np, cycles = bench(_kernels._cd_numpy, X, yc, grid, args.repeat)
        if _kernels.USING_NUMBA:
            t_nb, b_nb, _ = bench(_kernels._cd_numba, X, yc, grid, args.repeat)
            gap = np.abs(b_np - b_nb).max()
            assert gap < 1e-8, f"paths disagree by {gap}"
            print(f"{n:>6} {p:>5} {cycles:>7} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{n:>6} {p:>5} {cycles:>7} {t_np:>10.3f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
