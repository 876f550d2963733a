"""One-dimensional shift table: six seeds, default hyperparameters.

    python scripts/reproduce_table1.py --out results/table1
"""

import argparse

from ru_regression import config
from ru_regression.runner import run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0..5")
    ap.add_argument("--out", default="results/table1")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    cfg = config.from_dict({"seeds": config.parse_seeds(args.seeds), "out": args.out}, config.get_preset("table1"))
    run(cfg, force=args.force, n_jobs=args.jobs)


if __name__ == "__main__":
    main()
