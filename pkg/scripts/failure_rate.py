"""Median-of-means failure rate versus the number of batches R at d = 2.

    python3 scripts/failure_rate.py [--repeats 500] [--epsilon 0.5]
"""

import argparse

from cseu import oracles
from cseu.harness import experiments as X
from cseu.measurement import CollectiveMeasurementSpec
from cseu.rng import stream


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeats", type=int, default=500)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--tasks", type=int, default=16)
    p.add_argument("--q", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = stream(args.seed, "tasks")
    u = X.make_unitary("haar", 2, rng)
    tasks = [X.make_task("gue", 2.0, "haar-pure", 1, 2, rng) for _ in range(args.tasks)]
    bound = X.per_batch_failure_bound(u, tasks, 1, args.q, args.epsilon)
    print(f"q = {args.q}: Chebyshev per-batch failure bound {bound:.3f}")
    for R in (1, 3, 5, 9, 17, 33):
        rep = X.failure_rate_experiment(u, tasks, CollectiveMeasurementSpec(1), args.q, R, args.epsilon, args.repeats, args.seed + R)
        e = rep.extra
        print(f"R = {R:3d}  joint {e['failure_rate']:.4f}  per-task {e['per_task_failure']:.4f}  union bound {e['union_bound']:.3g}")
    print("R for delta = 0.05:", oracles.median_batches(args.tasks, 0.05))


if __name__ == "__main__":
    main()
