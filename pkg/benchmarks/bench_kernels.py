"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

Prints one row per kernel with the best-of-N wall time for each backend
and the speedup.  The numba timings exclude compilation (each kernel is
called once before timing).  Run with FRESHBLEND_DISABLE_NUMBA=1 to
confirm the package degrades gracefully; this script always benchmarks
both implementations directly, regardless of which one the package
selected.
"""

import argparse
import time

import numpy as np

from freshblend import kernels

RNG = np.random.default_rng(0)


def _blend_case():
    queries = 2000
    pool = 20
    r_fresh = RNG.random((queries, pool))
    r_any = RNG.random((queries, pool))
    tie_rank = np.stack([RNG.permutation(pool) for _ in range(queries)]).astype(np.int64)

    def call(fn):
        for i in range(queries):
            fn(r_fresh[i], r_any[i], tie_rank[i], 0.4, 0.6, 0.85, 0, 10)

    return call


def _err_case():
    r_fresh = RNG.random((200_000, 10))
    r_any = RNG.random((200_000, 10))
    p_fresh = RNG.random(200_000)

    def call(fn):
        fn(r_fresh, r_any, p_fresh, 1.0 - p_fresh, 0.85, 0)

    return call


def _clicks_case():
    shape = (200_000, 10)
    r_user = RNG.random(shape)
    u_cont = RNG.random(shape)
    u_click = RNG.random(shape)

    def call(fn):
        fn(r_user, u_cont, u_click, 0.85, 0)

    return call


def _split_case():
    columns = [np.sort(RNG.random(2000)) for _ in range(200)]
    targets = [RNG.normal(0, 1, 2000) for _ in range(200)]

    def call(fn):
        for values, target in zip(columns, targets):
            fn(values, target)

    return call


def _apply_case():
    # a full depth-3 tree over 4 features
    feature = np.array([0, 1, 2, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
                       dtype=np.int64)
    feature[4:] = -1
    left = np.array([1, 3, 5, 7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
                    dtype=np.int64)
    right = np.array([2, 4, 6, 8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
                     dtype=np.int64)
    threshold = RNG.random(15)
    x = RNG.random((200_000, 4))

    def call(fn):
        fn(x, feature, threshold, left, right)

    return call


CASES = [
    ("greedy_blend (2k pools of 20)", _blend_case,
     kernels._greedy_blend_numpy, "_greedy_blend_numba"),
    ("err_iaa_batch (200k pages)", _err_case,
     kernels._err_iaa_batch_numpy, "_err_iaa_batch_numba"),
    ("simulate_clicks (200k rows)", _clicks_case,
     kernels._simulate_clicks_numpy, "_simulate_clicks_numba"),
    ("best_split (200 x 2k)", _split_case,
     kernels._best_split_numpy, "_best_split_numba"),
    ("tree_apply (200k x depth 3)", _apply_case,
     kernels._tree_apply_numpy, "_tree_apply_numba"),
]


def best_of(call, fn, repeats):
    call(fn)  # warm up / compile
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        call(fn)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print(f"kernel backend selected by the package: {kernels.backend_name()}")
    header = f"{'kernel':<34} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, make_case, numpy_fn, numba_attr in CASES:
        call = make_case()
        numpy_s = best_of(call, numpy_fn, args.repeats)
        numba_fn = getattr(kernels, numba_attr, None)
        if numba_fn is None:
            print(f"{name:<34} {numpy_s * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>8}")
            continue
        numba_s = best_of(call, numba_fn, args.repeats)
        print(f"{name:<34} {numpy_s * 1e3:>8.1f}ms {numba_s * 1e3:>8.1f}ms "
              f"{numpy_s / numba_s:>7.1f}x")


if __name__ == "__main__":
    main()
