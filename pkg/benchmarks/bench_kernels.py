"""Benchmark the compiled scoring kernels against the pure-Python reference.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]

Both backends are imported directly (bypassing the import-time selection in
histsum.kernels) so they can be timed side by side in one process.
"""

from __future__ import annotations

import argparse
import importlib
import statistics
import time

import numpy as np

_pyref = importlib.import_module("histsum.kernels._pyref")
try:
    _speedups = importlib.import_module("histsum.kernels._speedups")
except ImportError:
    _speedups = None


def time_call(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return min(samples), statistics.median(samples)


def bench_lcs(backend, rng, length, repeats):
    a = rng.integers(0, 50, size=length).astype(np.int32)
    b = rng.integers(0, 50, size=length).astype(np.int32)
    return time_call(lambda: backend.lcs_length(a, b), repeats)


def bench_overlap(backend, rng, n_ids, vocab, repeats):
    ids = rng.integers(0, vocab, size=n_ids).astype(np.int32)
    ref = rng.integers(0, 4, size=vocab).astype(np.int32)

    def run():
        cur = np.zeros(vocab, dtype=np.int32)
        backend.clipped_overlap_apply(ids, cur, ref)
        backend.clipped_overlap_peek(ids, cur, ref)

    return time_call(run, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    cases = []
    for length in (64, 256, 1024):
        cases.append((f"lcs_length n={length}",
                      lambda be, n=length: bench_lcs(be, rng, n, args.repeats)))
    for n_ids in (128, 2048):
        cases.append((f"clipped_overlap n={n_ids}",
                      lambda be, n=n_ids: bench_overlap(be, rng, n, 4096,
                                                        args.repeats)))

    header = f"{'case':<26} {'python (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, runner in cases:
        py_best, _ = runner(_pyref)
        if _speedups is None:
            print(f"{name:<26} {py_best * 1e3:>12.3f} {'missing':>14} {'-':>8}")
            continue
        c_best, _ = runner(_speedups)
        ratio = py_best / c_best if c_best > 0 else float("inf")
        print(f"{name:<26} {py_best * 1e3:>12.3f} {c_best * 1e3:>14.3f} "
              f"{ratio:>7.1f}x")

    if _speedups is None:
        print("\ncompiled extension not built; run `pip install -e .` first")


if __name__ == "__main__":
    main()
