"""Benchmark the numba-compiled grid kernels against the pure-numpy path.

The grid evaluators are the hot inner loops of every rank experiment
(a full family matrix is assembled before any block SVD).  This script
times both implementations on production-size grids and prints the
speedup.  The numba path is warmed up first so JIT compilation is not
billed to the measurement.

Usage:
    python bench/bench_kernels.py [--size 4096] [--repeats 5]

The in-process selection (what `hlrd.families.dense_matrix` actually
uses) follows the HLRD_NUMBA environment variable; this benchmark always
times both paths explicitly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hlrd._kernels import IMPLEMENTATIONS, USE_NUMBA


def _time(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--size", type=int, default=4096, help="grid side length")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    n = args.size
    ks = np.arange(n + 1, dtype=np.float64)
    qs = (np.arange(n, dtype=np.float64) + 0.5) / n
    lams = np.arange(1, n + 1, dtype=np.float64)
    xs = np.arange(1, n + 1, dtype=np.float64)
    kcols = np.arange(1, n + 1, dtype=np.float64)

    cases = [
        ("binomial_pmf_grid", (float(n), ks, qs)),
        ("poisson_pmf_grid", (ks, lams)),
        ("chisq_pdf_grid", (xs, kcols)),
    ]

    numba_impls = IMPLEMENTATIONS["numba"]
    numpy_impls = IMPLEMENTATIONS["numpy"]
    print(f"grid {n + 1} x {n}, best of {args.repeats} runs "
          f"(package default path: {'numba' if USE_NUMBA else 'numpy'})")
    print(f"{'kernel':24s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max|diff|':>10s}")
    for name, call_args in cases:
        np_fn = numpy_impls[name]
        t_np = _time(np_fn, call_args, args.repeats)
        if numba_impls is None:
            print(f"{name:24s} {t_np:10.4f} {'n/a':>10s} {'n/a':>8s} {'n/a':>10s}")
            continue
        nb_fn = numba_impls[name]
        nb_fn(*call_args)  # warm up the JIT
        t_nb = _time(nb_fn, call_args, args.repeats)
        diff = float(np.max(np.abs(np_fn(*call_args) - nb_fn(*call_args))))
        print(f"{name:24s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.2f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
