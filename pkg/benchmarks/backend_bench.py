#!/usr/bin/env python3
"""Compare the compiled and pure-Python field kernels.

Times the two hot operations (elementwise modular multiply and modular
matrix multiply, the core of share encoding/decoding) on both backends
and prints a speedup table.  Run after an editable install:

    python benchmarks/backend_bench.py
"""

import time

import numpy as np

import secfpp._kernels as kernels
from secfpp._kernels import pyops

Q = 10_000_000_019  # default protocol-scale modulus


def _time(fn, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    if "compiled" not in kernels.available_backends():
        print("compiled backend not built; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}   modulus: {Q}")
    print(f"{'operation':<34}{'compiled':>12}{'python':>12}{'speedup':>10}")

    for size in (10_000, 1_000_000):
        a = rng.integers(0, Q, size, dtype=np.uint64)
        b = rng.integers(0, Q, size, dtype=np.uint64)
        out = np.empty(size, dtype=np.uint64)
        c = _time(lambda: kernels.get_ops("compiled").mulmod_vec(a, b, Q, out))
        p = _time(lambda: pyops.mulmod(a, b, Q))
        print(f"{'mulmod n=%d' % size:<34}{c:>12.6f}{p:>12.6f}{p / c:>10.1f}x")

    for (r, k, cdim) in ((600, 20, 40), (4000, 32, 64)):
        A = rng.integers(0, Q, (r, k), dtype=np.uint64)
        B = rng.integers(0, Q, (k, cdim), dtype=np.uint64)
        out = np.empty((r, cdim), dtype=np.uint64)
        c = _time(lambda: kernels.get_ops("compiled").matmul_mod(A, B, Q, out))
        p = _time(lambda: pyops.matmul_mod(A, B, Q))
        label = f"matmul_mod {r}x{k}x{cdim}"
        print(f"{label:<34}{c:>12.6f}{p:>12.6f}{p / c:>10.1f}x")

    # an end-to-end share encode at benchmark scale (n=40 users, d=4000)
    from secfpp import lcc
    from secfpp.field import PrimeField
    field = PrimeField(Q)
    params = lcc.LccParams.make(field, n=40, t=13)
    vec = rng.integers(0, Q, 4000, dtype=np.uint64)
    c = _time(lambda: lcc.share_all([vec] * 4, params,
                                    np.random.default_rng(1)), repeats=3)
    print(f"{'share_all 4 owners d=4000 n=40':<34}{c:>12.6f}"
          f"{'(active backend)':>22}")


if __name__ == "__main__":
    main()
