#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-Python estimator kernels.

Runs the same replicated experiment through both backends and reports
steps per second plus the speedup.  The two backends produce identical
trajectories up to floating-point rounding, so this is purely a
performance comparison.

Usage:
    python3 benchmarks/bench_kernels.py [--n 20000] [--replicates 10] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from asgd.datagen import DistributionSpec
from asgd.estimator import StepSchedule
from asgd.harness import ExperimentConfig, geometric_checkpoints, run_replicates
from asgd.kernels import get_backend
from asgd.objectives import (CoshLogisticObjective, GeometricQuantileObjective,
                             QuadraticObjective)


def cases(n: int, replicates: int):
    sched = StepSchedule(1.0, 2.0 / 3.0)
    cps = geometric_checkpoints(n, first=max(2, n // 10))
    yield "quadratic d=2", ExperimentConfig(
        objective=QuadraticObjective(np.zeros(2)),
        spec=DistributionSpec("gaussian", 2),
        schedule=sched, n_max=n, n_replicates=replicates,
        checkpoints=cps, seed=1)
    yield "geometric median d=5", ExperimentConfig(
        objective=GeometricQuantileObjective(5),
        spec=DistributionSpec("gaussian", 5, center=[1.0] * 5),
        schedule=sched, n_max=n, n_replicates=replicates,
        checkpoints=cps, seed=1)
    yield "cosh-logistic d=3", ExperimentConfig(
        objective=CoshLogisticObjective(3),
        spec=DistributionSpec("teacher_cosh", 3, teacher=[1.0, -2.0, 1.5], noise=0.1),
        schedule=sched, n_max=n, n_replicates=replicates,
        checkpoints=cps, seed=1)


def best_time(cfg, backend, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_replicates(cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="steps per replicate")
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats, best kept")
    args = ap.parse_args()

    backends = [("py", get_backend("py"))]
    try:
        backends.insert(0, ("c", get_backend("c")))
    except ImportError:
        print("compiled backend not built; timing the pure-Python kernel only\n")

    steps = args.n * args.replicates
    print(f"{steps:,} steps per case ({args.replicates} replicates x {args.n:,} samples), "
          f"best of {args.repeats}\n")
    print(f"{'case':<24}" + "".join(f"{name + ' steps/s':>16}" for name, _ in backends)
          + ("{:>10}".format("speedup") if len(backends) == 2 else ""))
    for label, cfg in cases(args.n, args.replicates):
        rates = []
        for _, mod in backends:
            rates.append(steps / best_time(cfg, mod, args.repeats))
        row = f"{label:<24}" + "".join(f"{r:>16,.0f}" for r in rates)
        if len(rates) == 2:
            row += f"{rates[0] / rates[1]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
