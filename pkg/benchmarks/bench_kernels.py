"""Numba vs pure-numpy timings of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Kernels: Philox normals for one replica-sized block, the inner log-kernel
integrals of the quadrature evaluator, one full quadrature covariance, and a
whole replica (the replica is timed in subprocesses, since the backend of
``sample_replica`` is fixed at import by STOCHWISHART_DISABLE_NUMBA).
"""

import argparse
import math
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from stochwishart import _backend, rng
from stochwishart.quadrature import log_kernel_inner
from stochwishart.theory import CovarianceParams, covariance_quadrature

REPLICA_SNIPPET = """
import time
from stochwishart.ensemble import ExperimentGeometry, ObservableSpec, sample_replica
from stochwishart.entry_process import EntryProcessSpec, TimeGrid
g = ExperimentGeometry(100, TimeGrid((0.0, 1.0)), (ObservableSpec(4, 2, 1, 0), ObservableSpec(1, 1, 1, 1)), EntryProcessSpec())
sample_replica(g, 1, 0)
t = time.perf_counter()
for r in range({n}):
    sample_replica(g, 1, r)
print((time.perf_counter() - t) / {n})
"""


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def replica_time(disable_numba, n):
    env = dict(os.environ, STOCHWISHART_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run(
        [sys.executable, "-c", REPLICA_SNIPPET.format(n=n)], env=env, capture_output=True, text=True, check=True
    )
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _backend.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    phis = np.linspace(0.01, math.pi - 0.01, 64)
    point = CovarianceParams(3, 4, 5, 2, 3, 1, 0.1, 1, 0.5, 1.5)
    kernels = {
        "philox normals, 400x200 block, beta=1": lambda b: rng.normal_block(7, 0, 0, 400, 0, 200, 1, 1, backend=b),
        "philox normals, 200x100 block, beta=4": lambda b: rng.normal_block(7, 0, 0, 200, 0, 100, 1, 4, backend=b),
        "inner log-kernel integrals, 64 nodes": lambda b: log_kernel_inner(phis, 1.0, 4.0, math.sqrt(3.0), 4, 1e-10, backend=b),
        "covariance_quadrature, p=(3,4)": lambda b: covariance_quadrature(point, abs_tol=1e-7, backend=b),
    }
    print(f"{'kernel':42s} {'numba':>11s} {'numpy':>11s} {'speed-up':>9s}")
    for name, fn in kernels.items():
        fast, _ = best_of(lambda: fn("numba"), args.repeat)
        slow, _ = best_of(lambda: fn("numpy"), max(1, args.repeat // 2))
        print(f"{name:42s} {fast * 1e3:9.2f}ms {slow * 1e3:9.2f}ms {slow / fast:8.1f}x")
    fast = replica_time(False, 200)
    slow = replica_time(True, 20)
    print(f"{'sample_replica, first example, L=100':42s} {fast * 1e3:9.2f}ms {slow * 1e3:9.2f}ms {slow / fast:8.1f}x")


if __name__ == "__main__":
    main()
