#!/usr/bin/env python3
"""Benchmark the surrogate forest kernels: numba JIT vs pure-numpy fallback.

Fits and predicts at the sizes the tuning loop actually sees (tens to a few
hundred history points, 10-130 encoded features) plus one larger shape for
headroom. Both backends run the same kernel source; outputs are checked
bit-identical before timing. Select a single backend with OPTTUNE_NUMBA=0/1.

    python benchmarks/bench_forest.py [--trees 32] [--repeat 5]
"""

import argparse
import time

import numpy as np

from opttune.search.forest import RegressionForest, numba_available

SHAPES = [
    (50, 13),    # early history, mock-solver space
    (200, 13),   # late history, mock-solver space
    (200, 128),  # late history, full Cbc space
    (1000, 40),  # stress
]


def synth(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = X[:, 0] * 3.0 + np.sin(4 * X[:, 1]) + 0.1 * rng.standard_normal(n)
    return X, y


def time_backend(use_numba, n, d, trees, repeat):
    X, y = synth(n, d, seed=1)
    Q, _ = synth(512, d, seed=2)
    forest = RegressionForest(n_trees=trees, seed=7, use_numba=use_numba)
    forest.fit(X, y)  # warm-up (JIT compile on the numba path)
    t_fit = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        RegressionForest(n_trees=trees, seed=7, use_numba=use_numba).fit(X, y)
        t_fit.append(time.perf_counter() - t0)
    t_pred = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        forest.predict(Q)
        t_pred.append(time.perf_counter() - t0)
    mean, std = forest.predict(Q)
    return min(t_fit), min(t_pred), (mean, std)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trees", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = [False]
    if numba_available():
        backends.insert(0, True)
    else:
        print("numba not importable: benchmarking the numpy path only")

    print(f"{'shape':>12s} {'backend':>8s} {'fit ms':>10s} {'predict ms':>11s} {'speedup':>8s}")
    for n, d in SHAPES:
        rows = {}
        for use_numba in backends:
            fit_s, pred_s, out = time_backend(use_numba, n, d, args.trees, args.repeat)
            rows[use_numba] = (fit_s, pred_s, out)
            label = "numba" if use_numba else "numpy"
            speedup = ""
            if not use_numba and True in rows:
                speedup = f"{rows[False][0] / rows[True][0]:.1f}x"
            print(f"{n:>6d}x{d:<5d} {label:>8s} {fit_s * 1e3:>10.2f} {pred_s * 1e3:>11.2f} "
                  f"{speedup:>8s}")
        if len(rows) == 2:
            a, b = rows[True][2], rows[False][2]
            agree = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            print(f"{'':>12s} backends bit-identical: {agree}")


if __name__ == "__main__":
    main()
