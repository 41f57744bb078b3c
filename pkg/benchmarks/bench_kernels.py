"""Compare the numba and numpy kernel implementations.

    python benchmarks/bench_kernels.py [--repeat N]

Prints best-of-N wall time per kernel and input size, plus the speedup of
numba over numpy. The first numba call (compilation) is excluded.
"""

import argparse
import time

import numpy as np

from rtnand._kernels import IMPLEMENTATIONS

NAMES = ("popcount_xor", "first_overlap", "deviation_pct")


def inputs(size, rng):
    a = rng.integers(0, 256, size, dtype=np.uint8)
    b = rng.integers(0, 256, size, dtype=np.uint8)
    starts = np.cumsum(rng.integers(100, 200, size)).astype(np.int64)
    ends = starts + 90  # disjoint, so the scan runs to the end
    obs = rng.integers(1, 10**9, size).astype(np.int64)
    ref = obs + rng.integers(-1000, 1000, size)
    return (a, b), (starts, ends), (obs, ref)


def best_of(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--sizes", default="4096,65536,1048576")
    args = p.parse_args()
    if "numba" not in IMPLEMENTATIONS:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'size':>10}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for size in map(int, args.sizes.split(",")):
        data = inputs(size, rng)
        for k, name in enumerate(NAMES):
            t_np = best_of(IMPLEMENTATIONS["numpy"][k], data[k], args.repeat)
            t_nb = best_of(IMPLEMENTATIONS["numba"][k], data[k], args.repeat)
            print(f"{name:<15}{size:>10}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
