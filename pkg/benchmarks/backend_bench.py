"""Timing comparison of the compiled and pure-Python step kernels.

Runs identical PMM trajectories on both backends, checks they agree bit for
bit, and reports steps/second plus the speedup.

    python benchmarks/backend_bench.py --steps 200000 --repeats 5
"""

import argparse
import time

import numpy as np

from rps_sim import SchemeConfig, benchmark_problem, compiled_available, sample_grid, simulate


def time_backend(problem, config, view, xi, backend, repeats):
    best = float("inf")
    traj = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        traj = simulate(problem, config, view, xi, store_stride=view.steps, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--h", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    problem = benchmark_problem()
    config = SchemeConfig(kind="pmm", h=args.h, gamma=problem.gamma)
    grid = sample_grid(args.seed, 0.0, args.steps * args.h, args.h)
    view = grid.view()

    if not compiled_available():
        print("compiled extension not built; timing the Python kernel only")
        backends = ["python"]
    else:
        backends = ["compiled", "python"]

    results = {}
    trajs = {}
    for backend in backends:
        elapsed, traj = time_backend(problem, config, view, 0.5, backend, args.repeats)
        results[backend] = elapsed
        trajs[backend] = traj
        print(f"{backend:>9}: {elapsed * 1e3:8.2f} ms  "
              f"({args.steps / elapsed:12.0f} steps/s)")

    if len(backends) == 2:
        assert np.array_equal(trajs["compiled"].values, trajs["python"].values), \
            "backends disagree"
        print(f"  speedup: {results['python'] / results['compiled']:.1f}x "
              "(identical output verified)")


if __name__ == "__main__":
    main()
