"""Re-fit the bound constants and freeze them into the packaged constants file.

    python3 scripts/calibrate.py [--seed 0] [--batches 1000] [--out FILE]
"""

import argparse

from cseu import constants
from cseu.harness.experiments import calibrate


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batches", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="constants file (default: the packaged one)")
    args = p.parse_args()
    res = calibrate(seed=args.seed, batches=args.batches, threads=args.threads)
    top_var = max(res["variance_rows"], key=lambda r: r[-1])
    top_otoc = max(res["otoc_rows"], key=lambda r: r[-1])
    print("largest variance ratio:", top_var)
    print("largest otoc ratio:", top_otoc)
    path = constants.write(res["constants"], args.out, f"calibrated at d=2 s=1, seed={args.seed}, batches={args.batches}")
    for k, v in res["constants"].items():
        print(f"{k} = {v:.6g}")
    print("wrote", path)


if __name__ == "__main__":
    main()
