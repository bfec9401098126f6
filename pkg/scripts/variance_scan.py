"""Print empirical batch-mean variance against the calibrated bound over a (d, s, q) grid.

    python3 scripts/variance_scan.py [--batches 500] [--seed 0]
"""

import argparse

from cseu.harness.experiments import scan_grid


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--batches", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    grid = [(d, s, q, 1.0, 1) for d in (2, 4, 8) for s in (1, 2, 4, 8) if s <= d for q in (4, 16, 64)]
    print(f"{'d':>3} {'s':>3} {'q':>4} {'var':>11} {'bound':>11} {'ratio':>7}")
    for pt in scan_grid(grid, "pauli", args.batches, args.seed, threads=args.threads):
        print(f"{pt.d:3d} {pt.s:3d} {pt.q:4d} {pt.var_empirical:11.4g} {pt.prop1_bound:11.4g} {pt.ratio:7.3f}")


if __name__ == "__main__":
    main()
