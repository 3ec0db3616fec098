#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
Both backends produce bit-identical outputs; this script measures the
throughput difference on representative sizes (best of `repeats` runs,
after a warm-up call that also absorbs JIT compilation).
"""

import time

import numpy as np

from qkdkit import accel

REPEATS = 5


def best_time(fn, *args):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_toeplitz(rng):
    print("toeplitz_gf2 (GF(2) Toeplitz hash, n input bits -> n/2 output bits)")
    print(f"{'n':>10} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for n in (1 << 12, 1 << 14, 1 << 16, 1 << 18):
        m = n // 2
        x = rng.integers(0, 2, n, dtype=np.uint8)
        s = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        t_np = best_time(accel.toeplitz_gf2_numpy, x, s, m)
        if accel.HAVE_NUMBA:
            t_nb = best_time(accel.toeplitz_gf2_numba, x, s, m)
            assert np.array_equal(
                accel.toeplitz_gf2_numpy(x, s, m), accel.toeplitz_gf2_numba(x, s, m)
            )
            print(f"{n:>10} {t_np*1e3:>12.3f} {t_nb*1e3:>12.3f} {t_np/t_nb:>8.1f}x")
        else:
            print(f"{n:>10} {t_np*1e3:>12.3f} {'-':>12} {'-':>9}")


def bench_bb84(rng):
    print()
    print("bb84_outcomes (fused per-pulse click/sift/error pass)")
    print(f"{'pulses':>10} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for n in (10**5, 10**6, 10**7):
        match = rng.integers(0, 2, n).astype(bool)
        click_u = rng.random(n)
        error_u = rng.random(n)
        args = (match, click_u, error_u, 0.01, 0.0155)
        t_np = best_time(accel.bb84_outcomes_numpy, *args)
        if accel.HAVE_NUMBA:
            t_nb = best_time(accel.bb84_outcomes_numba, *args)
            a = accel.bb84_outcomes_numpy(*args)
            b = accel.bb84_outcomes_numba(*args)
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            print(f"{n:>10} {t_np*1e3:>12.3f} {t_nb*1e3:>12.3f} {t_np/t_nb:>8.1f}x")
        else:
            print(f"{n:>10} {t_np*1e3:>12.3f} {'-':>12} {'-':>9}")


def main():
    print(f"active backend: {accel.BACKEND} (numba available: {accel.HAVE_NUMBA})")
    rng = np.random.default_rng(12345)
    bench_toeplitz(rng)
    bench_bb84(rng)


if __name__ == "__main__":
    main()
