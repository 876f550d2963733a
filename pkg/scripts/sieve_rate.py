"""Sieve (h, alpha) distance to the per-x oracle minimiser as n grows."""

import argparse

from ru_regression import config
from ru_regression.runner import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", default="500,2000,8000", help="comma-separated sample sizes")
    ap.add_argument("--gamma", type=float, default=4.0)
    ap.add_argument("--kind", choices=["polynomial", "spline"], default="polynomial")
    ap.add_argument("--seeds", default="0..2")
    ap.add_argument("--out", default="results/sieve_rate")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    cfg = config.from_dict(
        {"seeds": config.parse_seeds(args.seeds), "out": args.out,
         "sieve": {"n_grid": [int(n) for n in args.n.split(",")], "gamma": args.gamma, "kind": args.kind}},
        config.get_preset("sieve-rate"),
    )
    result = run(cfg, force=args.force)
    print("strictly decreasing" if result["ok"] else "NOT strictly decreasing")


if __name__ == "__main__":
    main()
