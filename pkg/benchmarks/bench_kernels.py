"""Time the compiled hot loops against their pure-python references.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The pure-python paths are what you get with RIDGERISK_NO_NUMBA=1, so the
speedup column is the cost of disabling the compiled kernels.
"""

import time

import numpy as np

from ridgerisk import _kernels as kernels


def _time(fn, repeats=30):
    fn()  # dispatch/compile outside the timed region
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _spectrum(size):
    rng = np.random.default_rng(size)
    return np.ascontiguousarray(np.sort(rng.uniform(1e-6, 1.0, size))[::-1])


def main():
    if not kernels.NUMBA_ENABLED:
        raise SystemExit(
            "numba is disabled (RIDGERISK_NO_NUMBA is set); nothing to compare"
        )
    kernels.warmup()
    rows = []
    for size in (256, 2000, 8000):
        ev = _spectrum(size)
        proj2 = np.random.default_rng(size + 1).uniform(0.0, 2.0, size)
        align = np.random.default_rng(size + 2).uniform(0.0, 1.0, size)
        lams = np.geomspace(1e-6, 10.0, 24)
        cases = (
            (
                f"kappa_root p={size}",
                lambda: kernels.kappa_root_py(ev, 1e-4, size / 2),
                lambda: kernels.kappa_root_jit(ev, 1e-4, size / 2),
            ),
            (
                f"path_sums p={size} x24",
                lambda: kernels.path_sums_py(ev, proj2, lams),
                lambda: kernels.path_sums_jit(ev, proj2, lams),
            ),
            (
                f"omniscient_sums p={size}",
                lambda: kernels.omniscient_sums_py(ev, align, 0.01, size / 2),
                lambda: kernels.omniscient_sums_jit(ev, align, 0.01, size / 2),
            ),
        )
        for label, py, jit in cases:
            t_py = _time(py)
            t_jit = _time(jit)
            rows.append((label, t_py, t_jit, t_py / t_jit))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'python':>10}  {'numba':>10}  {'speedup':>8}")
    for label, t_py, t_jit, speedup in rows:
        print(
            f"{label:<{width}}  {t_py * 1e6:>8.1f}us  {t_jit * 1e6:>8.1f}us"
            f"  {speedup:>7.1f}x"
        )


if __name__ == "__main__":
    main()
