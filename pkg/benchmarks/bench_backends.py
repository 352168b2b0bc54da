"""Compare the compiled and pure-Python kernels on the two hot loops.

Usage: python benchmarks/bench_backends.py [--episodes N] [--replicates R]

Also asserts that both backends produce bitwise-identical tables, which is the
property the worker-invariance and reduction guarantees rest on.
"""

import argparse
import time

import numpy as np

from qdelta import (DeltaTable, RewardNoise, TimescaleSchedule, build_ring_mdp,
                    phased_w_update, run_qdelta)
from qdelta._backend import BACKEND


def _ring():
    r0 = np.array([0.4, 0.1, 0.3, 0.0, 0.2])
    return build_ring_mdp(5, 0.1, reward_spec=np.stack([r0, r0 - 0.3], axis=1),
                          noise=RewardNoise("uniform_clipped", 0.2))


def _time(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--replicates", type=int, default=3,
                        help="timing repeats; the best run is reported")
    args = parser.parse_args()

    if BACKEND != "compiled":
        print("note: compiled backend unavailable, timing python only")
    mdp = _ring()
    sched = TimescaleSchedule(gammas=[0.5, 0.9], ks=[2, 10],
                              alphas=[0.05, 0.05])
    backends = ["compiled", "python"] if BACKEND == "compiled" else ["python"]

    print(f"{'loop':<18}{'backend':<10}{'seconds':>10}{'speedup':>10}")
    results = {}
    for backend in backends:
        secs, (table, _) = _time(
            lambda b=backend: run_qdelta(mdp, sched, args.episodes, 100,
                                         (0.3, 0.05), seed=0, backend=b),
            args.replicates)
        results[backend] = (secs, table.w.copy())
    base = results[backends[-1]][0]
    for backend in backends:
        secs, _ = results[backend]
        print(f"{'run_qdelta':<18}{backend:<10}{secs:>10.4f}{base / secs:>9.1f}x")
    if len(backends) == 2:
        assert np.array_equal(results["compiled"][1], results["python"][1]), \
            "backends disagree on run_qdelta output"

    table0 = DeltaTable.zeros(
        TimescaleSchedule(gammas=[0.5, 0.9], ks=[2, 10]), 5, 2)
    results = {}
    for backend in backends:
        secs, out = _time(
            lambda b=backend: phased_w_update(mdp, table0, n=200, seed=1,
                                              backend=b),
            args.replicates)
        results[backend] = (secs, out.w.copy())
    base = results[backends[-1]][0]
    for backend in backends:
        secs, _ = results[backend]
        print(f"{'phased_w_update':<18}{backend:<10}{secs:>10.4f}{base / secs:>9.1f}x")
    if len(backends) == 2:
        assert np.array_equal(results["compiled"][1], results["python"][1]), \
            "backends disagree on phased_w_update output"
        print("bitwise check: both loops identical across backends")


if __name__ == "__main__":
    main()
