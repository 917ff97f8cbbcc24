"""Time every kernel under both backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The numba column excludes compilation (one warm-up call per kernel).
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from popr import kernels


def workloads(rng: np.random.Generator) -> dict[str, tuple]:
    length = 100
    u = rng.random((4, length))
    return {
        "js_per_step": (rng.integers(2, size=length), rng.integers(2, size=length), 2, 1e-6),
        "kl_per_step": (rng.integers(4, size=length), rng.integers(4, size=length), 4, 1e-6),
        "distance_per_step": (rng.normal(size=(length, 3)), rng.normal(size=(length, 3)), 1.5),
        "mmd2": (rng.normal(size=(100, 2)), rng.normal(size=(100, 2)), np.array([0.2, 0.5, 0.9, 1.3])),
        "ring_rollout": (10, 0, 0.1, 0.4, -1, u[0], u[1], u[2], u[3]),
        "mixture_actions": (rng.integers(10, size=length), 10, 0.4, u[0], u[1]),
        "pairwise_greater": (rng.random((7, 50)),),
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args(argv)

    if not kernels.NUMBA_KERNELS:
        print("numba is not installed; only the numpy backend is available")
    loads = workloads(np.random.default_rng(0))
    print(f"{'kernel':<20} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for name, call_args in loads.items():
        times = {}
        for backend, table in (("numpy", kernels.NUMPY_KERNELS), ("numba", kernels.NUMBA_KERNELS)):
            fn = table.get(name)
            if fn is None:
                continue
            fn(*call_args)
            best = min(timeit.repeat(lambda: fn(*call_args), number=args.number, repeat=args.repeat))
            times[backend] = best / args.number * 1e6
        if "numba" in times:
            print(f"{name:<20} {times['numpy']:>10.2f} {times['numba']:>10.2f} {times['numpy'] / times['numba']:>7.1f}x")
        else:
            print(f"{name:<20} {times['numpy']:>10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
