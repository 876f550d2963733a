"""Command-line entry point.

Exit status: 0 on success, 1 on runtime failure, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .evaluation import bootstrap_se, test_mse, weighted_test_mse
from .losses import GammaBand
from .nn import RUModel, load_checkpoint, save_checkpoint, train
from .runner import run, synthetic_model, train_config
from .synthetic import generate, read_csv

THREADS_ENV = "RUREG_THREADS"

log = logging.getLogger("ru_regression")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--preset", help=f"named preset ({', '.join(sorted(cfgmod.PRESETS))})")
    p.add_argument("--seeds", help="seed list: '0..5', '0,2,4' or '3'")
    p.add_argument("--gamma", help="comma-separated Gamma values (overrides the preset grid)")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--threads", type=int, default=None, help=f"parallel jobs (default ${THREADS_ENV} or 1)")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    p.add_argument("--force", action="store_true", help="overwrite results produced by a different config")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ru-regression", description="Rockafellar-Uryasev regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment")
    _common(p)

    p = sub.add_parser("oracle-check", help="randomised NP-vs-LP worst-case risk and RU/CVaR identity checks")
    _common(p)
    p.add_argument("--n-cases", type=int, default=None)

    p = sub.add_parser("gen-data", help="write synthetic datasets as CSV")
    _common(p)
    p.add_argument("--p", type=float, default=None, help="mixing probability (default: model.train_p)")
    p.add_argument("--with-latent", action="store_true", help="append the latent band indicator column u")

    p = sub.add_parser("train", help="train an ERM or RU network on a CSV dataset")
    _common(p)
    p.add_argument("--data", required=True, help="CSV with header x1,...,xd,y")

    p = sub.add_parser("eval", help="score a checkpoint on a CSV dataset")
    _common(p)
    p.add_argument("--model", required=True, help="checkpoint JSON written by 'train'")
    p.add_argument("--data", required=True, help="CSV with header x1,...,xd,y")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates for standard errors")
    return parser


def resolve_config(args, default_preset: str = "table1") -> cfgmod.ExperimentConfig:
    if args.config:
        base = cfgmod.get_preset(args.preset) if args.preset else None
        cfg = cfgmod.load(args.config, base)
    else:
        cfg = cfgmod.get_preset(args.preset or default_preset)
    overrides: dict = {}
    if args.seeds:
        overrides["seeds"] = cfgmod.parse_seeds(args.seeds)
    if args.gamma:
        try:
            gammas = [float(g) for g in args.gamma.split(",") if g.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse --gamma {args.gamma!r}") from None
        overrides["sweep"] = {"gammas": gammas}
        if len(gammas) == 1:
            overrides["sieve"] = {"gamma": gammas[0]}
    if args.out and args.command in ("run", "oracle-check", "gen-data"):
        overrides["out"] = args.out
    return cfgmod.from_dict(overrides, cfg) if overrides else cfg.validate()


def _cmd_run(args, cfg) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    result = run(cfg, force=args.force, n_jobs=threads)
    return 0 if result["ok"] else 1


def _cmd_gen_data(args, cfg) -> int:
    model = synthetic_model(cfg)
    if args.p is not None:
        model = model.with_p(args.p)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": cfg.sizes.train, "validation": cfg.sizes.validation, "test": cfg.sizes.test}
    for seed in cfg.seeds:
        for name, n in sizes.items():
            ds = generate(model, {name: n}, np.random.SeedSequence([seed, ["train", "validation", "test"].index(name)]))
            path = out / f"{model.kind}_p{model.p:g}_seed{seed}_{name}.csv"
            ds.to_csv(path, include_latent=args.with_latent)
            print(path)
    return 0


def _split_fractions(cfg) -> tuple[float, float, float]:
    s = cfg.sizes
    return (s.train, s.validation, s.test)


def _cmd_train(args, cfg) -> int:
    seed = cfg.seeds[0]
    ds = read_csv(args.data, split_fractions=_split_fractions(cfg), seed=seed)
    gammas = [float(g) for g in args.gamma.split(",")] if args.gamma else []
    if len(gammas) > 1:
        raise ConfigError("train takes a single --gamma")
    mode = "ru" if gammas else "erm"
    tc = train_config(cfg, mode, seed)
    model, hist = train(ds, tc, band=GammaBand(gammas[0]) if gammas else None)
    out = Path(args.out or f"{mode}_seed{seed}.json")
    meta = {"data": str(args.data), "seed": seed, "mode": mode, "best_val": hist.best_val,
            "config_hash": cfg.hash()}
    save_checkpoint(model, out, meta)
    print(json.dumps({"checkpoint": str(out), "best_validation_objective": hist.best_val,
                      "test_mse": test_mse(model, ds) if (ds.split == "test").any() else None}))
    return 0


def _cmd_eval(args, cfg) -> int:
    model = load_checkpoint(args.model)
    ds = read_csv(args.data, default_split="test")
    res = {"n": len(ds), "test_mse": test_mse(model, ds)}
    if np.all(ds.outcomes >= 0) and ds.outcomes.sum() > 0:
        res["weighted_test_mse"] = weighted_test_mse(model, ds)
        if args.bootstrap:
            res["weighted_test_mse_se"] = bootstrap_se(model, ds, args.bootstrap, cfg.seeds[0])
    if isinstance(model, RUModel):
        res["gamma"] = model.band.gamma
    print(json.dumps(res))
    return 0


COMMANDS = {"run": _cmd_run, "oracle-check": _cmd_run, "gen-data": _cmd_gen_data,
            "train": _cmd_train, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        default = "oracle-check" if args.command == "oracle-check" else "table1"
        cfg = resolve_config(args, default)
        if args.command == "oracle-check":
            if cfg.kind != "oracle_check":
                cfg = cfgmod.from_dict({"kind": "oracle_check"}, cfg)
            if args.n_cases is not None:
                cfg = cfgmod.from_dict({"oracle_check": {"n_cases": args.n_cases}}, cfg)
        if args.dry_run:
            print(json.dumps({"command": args.command, "config_hash": cfg.hash(), **cfg.to_dict()}, indent=2))
            return 0
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: report and exit 1
        log.debug("failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
