"""Turns an :class:`ExperimentConfig` into artifacts on disk."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .evaluation import EvalReport, Method, shift_sweep
from .experiments import oracle_check, sieve_rate
from .nn import TrainConfig
from .sieve import SieveFitOptions
from .synthetic import SyntheticModel

log = logging.getLogger(__name__)


def synthetic_model(cfg: ExperimentConfig) -> SyntheticModel:
    spec = cfg.model
    if spec.kind == "one_dim":
        return SyntheticModel.one_dim(spec.train_p)
    m = SyntheticModel.high_dim(spec.train_p, noise_is_sd=spec.highdim_noise_is_sd)
    return SyntheticModel(m.kind, m.p, m.dim, m.coeffs, spec.highdim_noise, spec.highdim_noise_is_sd)


def train_config(cfg: ExperimentConfig, mode: str, seed: int = 0) -> TrainConfig:
    t = cfg.training
    return TrainConfig(
        mode=mode, epochs=t.epochs, batch_size=t.batch_size, learning_rate=t.learning_rate, seed=seed,
        hidden=tuple(t.erm_hidden if mode == "erm" else t.ru_hidden), validate_every=t.validate_every,
        alpha_softplus=t.alpha_softplus, dtype=t.dtype,
    )


def methods(cfg: ExperimentConfig) -> list[Method]:
    out = [Method("Standard ERM", train_config(cfg, "erm"))]
    out += [Method(f"RU Regression (Gamma={g:g})", train_config(cfg, "ru"), gamma=float(g)) for g in cfg.sweep.gammas]
    if cfg.sweep.include_oracle:
        out.append(Method("Oracle ERM", train_config(cfg, "erm"), oracle=True))
    return out


def _guard(meta_path: Path, cfg_hash: str, force: bool) -> None:
    if meta_path.exists() and not force:
        try:
            old = json.loads(meta_path.read_text()).get("config_hash")
        except (OSError, ValueError):
            old = None
        if old != cfg_hash:
            raise ConfigError(
                f"{meta_path.parent} holds results for config {old}, not {cfg_hash}; pass --force to overwrite"
            )


def _write_meta(path: Path, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    body = {"config_hash": cfg.hash(), "config": cfg.to_dict()}
    body.update(extra or {})
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def write_per_seed(report: EvalReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "gamma", "p", "seed", "mse"])
        for m in report.methods:
            g = report.gammas[m]
            for p in report.p_grid:
                for s, v in zip(report.seeds, report.values[(m, p)]):
                    w.writerow([m, "" if g is None else f"{g:g}", f"{p:g}", s, f"{v:.17g}"])


def run(cfg: ExperimentConfig, force: bool = False, n_jobs: int = 1, echo=print) -> dict:
    """Execute the configured experiment; returns a summary dict."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta_path = out / "meta.json"
    _guard(meta_path, cfg.hash(), force)

    if cfg.kind in ("one_dim_table", "high_dim_table", "custom"):
        sizes = {"train": cfg.sizes.train, "validation": cfg.sizes.validation, "test": cfg.sizes.test}
        ckpt = data = None
        if cfg.save_checkpoints:
            ckpt = out / "checkpoints"
            ckpt.mkdir(exist_ok=True)
        if cfg.save_datasets:
            data = out / "data"
            data.mkdir(exist_ok=True)
        report = shift_sweep(methods(cfg), synthetic_model(cfg), cfg.sweep.p_grid, sizes, cfg.seeds,
                             n_jobs=n_jobs, metadata={"config_hash": cfg.hash()}, checkpoint_dir=ckpt,
                             dataset_dir=data)
        report.to_csv(out / "report.csv")
        write_per_seed(report, out / "per_seed.csv")
        table = report.to_table(3 if cfg.model.kind == "one_dim" else 4)
        (out / "report.txt").write_text(table + "\n")
        _write_meta(meta_path, cfg)
        echo(table)
        return {"report": report, "ok": True}

    if cfg.kind == "sieve_rate":
        s = cfg.sieve
        res = sieve_rate(s.n_grid, s.gamma, cfg.model.train_p, cfg.seeds, s.p_smooth, s.kind, s.grid_points,
                         SieveFitOptions(max_iter=s.max_iter))
        with open(out / "sieve_rate.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "J", "seed", "l2_error"])
            for i, seed in enumerate(res["seeds"]):
                for j, (n, J) in enumerate(zip(res["n"], res["J"])):
                    w.writerow([n, J, seed, f"{res['errors'][i, j]:.17g}"])
        _write_meta(meta_path, cfg)
        lines = [f"{'n':>6} {'J':>3} {'mean L2 error':>14}"]
        lines += [f"{n:>6} {J:>3} {e:>14.4f}" for n, J, e in zip(res["n"], res["J"], res["mean"])]
        echo("\n".join(lines))
        decreasing = all(a > b for a, b in zip(res["mean"], res["mean"][1:]))
        return {"result": res, "ok": decreasing}

    if cfg.kind == "oracle_check":
        o = cfg.oracle_check
        res = oracle_check(o.n_cases, cfg.seeds[0], o.tol, o.resolution)
        summary = {
            "n_cases": res.n_cases, "failures": res.failures,
            "np_vs_lp_max_abs_diff": res.np_lp_max_abs, "ru_identity_max_abs_diff": res.identity_max_abs,
        }
        (out / "oracle_check.json").write_text(json.dumps(summary, indent=2) + "\n")
        _write_meta(meta_path, cfg)
        echo(f"oracle check: {res.n_cases - res.failures}/{res.n_cases} cases passed "
             f"(NP vs LP max |diff| {res.np_lp_max_abs:.3g}, RU identity max |diff| {res.identity_max_abs:.3g})")
        return {"result": res, "ok": res.passed}

    raise ConfigError(f"unhandled experiment kind {cfg.kind!r}")
