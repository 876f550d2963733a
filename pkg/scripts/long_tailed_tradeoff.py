"""Plain vs outcome-weighted test MSE for ERM and RU on skewed positive outcomes."""

import argparse
import json

from ru_regression.experiments import long_tailed_tradeoff


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--seeds", default="0,1")
    args = ap.parse_args()
    for s in (int(v) for v in args.seeds.split(",")):
        print(json.dumps({"seed": s, **long_tailed_tradeoff(args.gamma, seed=s)}))


if __name__ == "__main__":
    main()
