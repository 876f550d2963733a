"""Test metrics, distribution-shift sweeps and report tables."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .losses import DomainError, GammaBand
from .nn import TrainConfig, save_checkpoint, train
from .synthetic import SyntheticModel, generate

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("method", "gamma", "p", "mean_mse", "std_mse", "n_seeds")


class SweepError(RuntimeError):
    pass


def _test_split(dataset, split: str):
    x, y = dataset.subset(split)
    if y.size == 0:
        raise ValueError(f"empty {split!r} split")
    return x, y


def test_mse(model, dataset, split: str = "test") -> float:
    x, y = _test_split(dataset, split)
    return float(np.mean((y - model(x)) ** 2))


test_mse.__test__ = False  # not a pytest test


def outcome_weights(y) -> np.ndarray:
    """w_i = y_i / sum_j y_j; outcomes must be nonnegative and not all zero."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("outcome-proportional weights need nonnegative outcomes")
    total = y.sum()
    if total <= 0:
        raise DomainError("all outcomes are zero; weights undefined")
    return y / total


def weighted_test_mse(model, dataset, split: str = "test") -> float:
    """MSE under the size-biased test law that samples unit i with probability y_i / sum y."""
    x, y = _test_split(dataset, split)
    w = outcome_weights(y)
    return float(w @ (y - model(x)) ** 2)


def bootstrap_se(model, dataset, n_boot: int = 5000, seed: int = 0,
                 metric: Callable = weighted_test_mse, split: str = "test") -> float:
    """Bootstrap standard error of ``metric`` over resampled test rows."""
    x, y = _test_split(dataset, split)
    pred = model(x)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, y.size, y.size)
        yb = y[idx]
        if metric is weighted_test_mse:
            stats[b] = outcome_weights(yb) @ (yb - pred[idx]) ** 2
        else:
            stats[b] = np.mean((yb - pred[idx]) ** 2)
    return float(stats.std(ddof=1))


@dataclass
class Method:
    """A named training recipe. ``oracle`` methods train at the test-time p."""

    name: str
    config: TrainConfig
    gamma: float | None = None
    oracle: bool = False

    def fit(self, dataset):
        band = GammaBand(self.gamma) if self.gamma is not None else None
        model, _ = train(dataset, self.config, band=band)
        return model


@dataclass
class EvalReport:
    methods: list[str]
    gammas: dict[str, float | None]
    p_grid: list[float]
    seeds: list[int]
    values: dict[tuple[str, float], list[float]]
    metadata: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for m in self.methods:
            for p in self.p_grid:
                v = np.asarray(self.values[(m, p)], dtype=float)
                out.append({"method": m, "gamma": self.gammas[m], "p": p,
                            "mean_mse": float(v.mean()), "std_mse": float(v.std()), "n_seeds": int(v.size)})
        return out

    def mean(self, method: str, p: float) -> float:
        return float(np.mean(self.values[(method, p)]))

    def row_means(self, method: str) -> np.ndarray:
        return np.array([self.mean(method, p) for p in self.p_grid])

    def per_seed(self, method: str) -> np.ndarray:
        """(n_seeds, n_p) matrix of metric values."""
        return np.array([self.values[(method, p)] for p in self.p_grid]).T

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows():
            g = "" if r["gamma"] is None else f"{r['gamma']:g}"
            w.writerow([r["method"], g, f"{r['p']:g}", f"{r['mean_mse']:.17g}", f"{r['std_mse']:.17g}", r["n_seeds"]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_table(self, digits: int = 3) -> str:
        """Aligned text table: one row per method, one column per test p."""
        header = ["Method"] + [f"p={p:g}" for p in self.p_grid]
        body = []
        for m in self.methods:
            cells = [m]
            for p in self.p_grid:
                v = np.asarray(self.values[(m, p)])
                cells.append(f"{v.mean():.{digits}f} ± {v.std():.{digits}f}")
            body.append(cells)
        widths = [max(len(r[j]) for r in [header] + body) for j in range(len(header))]

        def fmt(r):
            return " | ".join(c.ljust(widths[j]) if j == 0 else c.rjust(widths[j]) for j, c in enumerate(r))

        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(header), rule] + [fmt(r) for r in body])


def _seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


def sweep_datasets(model: SyntheticModel, seed: int, p_grid, sizes: dict[str, int]):
    """Train/validation at the model's p, and one test set per p, for one seed."""
    train_ds = generate(model, {"train": sizes["train"], "validation": sizes["validation"]}, _seed(seed, 0))
    tests = {p: generate(model.with_p(p), {"test": sizes["test"]}, _seed(seed, 1, i)) for i, p in enumerate(p_grid)}
    return train_ds, tests


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text.lower()).strip("_")


def _run_cell(method: Method, model: SyntheticModel, seed: int, p_grid, sizes,
              checkpoint_dir=None, dataset_dir=None) -> list[float]:
    train_ds, tests = sweep_datasets(model, seed, p_grid, sizes)
    m = Method(method.name, _with_seed(method.config, seed), method.gamma, method.oracle)
    stem = f"{_slug(m.name)}_seed{seed}"
    if dataset_dir is not None and not m.oracle:
        train_ds.to_csv(f"{dataset_dir}/seed{seed}_train_validation.csv", include_latent=True)
        for p in p_grid:
            tests[p].to_csv(f"{dataset_dir}/seed{seed}_test_p{p:g}.csv", include_latent=True)
    out = []
    if m.oracle:
        for i, p in enumerate(p_grid):
            ds = generate(model.with_p(p), {"train": sizes["train"], "validation": sizes["validation"]},
                          _seed(seed, 2, i))
            fitted = m.fit(ds)
            if checkpoint_dir is not None:
                save_checkpoint(fitted, f"{checkpoint_dir}/{stem}_p{p:g}.json", {"method": m.name, "seed": seed, "p": p})
            out.append(test_mse(fitted, tests[p]))
    else:
        fitted = m.fit(train_ds)
        if checkpoint_dir is not None:
            save_checkpoint(fitted, f"{checkpoint_dir}/{stem}.json", {"method": m.name, "seed": seed})
        out = [test_mse(fitted, tests[p]) for p in p_grid]
    return out


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    d = dict(cfg.__dict__)
    d["seed"] = seed
    return TrainConfig(**d)


def shift_sweep(methods: list[Method], model: SyntheticModel, p_grid, sizes: dict[str, int], seeds,
                n_jobs: int = 1, metadata: dict | None = None, checkpoint_dir=None,
                dataset_dir=None) -> EvalReport:
    """Train every method once per seed at the model's p and score it at every test p.

    Cells (seed, method) are independent; they run in parallel when ``n_jobs > 1``
    and are assembled in a fixed order so the report does not depend on scheduling.
    """
    p_grid = [float(p) for p in p_grid]
    seeds = [int(s) for s in seeds]
    if not methods or not p_grid or not seeds:
        raise ValueError("methods, p_grid and seeds must be non-empty")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    cells = [(s, m) for s in seeds for m in methods]

    def run(s, m):
        try:
            return _run_cell(m, model, s, p_grid, sizes, checkpoint_dir, dataset_dir)
        except Exception as e:
            raise SweepError(f"seed={s} method={m.name!r}: {e}") from e

    if n_jobs > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run)(s, m) for s, m in cells)
    else:
        results = []
        for s, m in cells:
            log.info("seed %d: %s", s, m.name)
            results.append(run(s, m))

    values = {(m.name, p): [] for m in methods for p in p_grid}
    for (s, m), res in zip(cells, results):
        for p, v in zip(p_grid, res):
            values[(m.name, p)].append(v)
    meta = {"sizes": dict(sizes), "seeds": seeds, "train_p": model.p, "model_kind": model.kind}
    meta.update(metadata or {})
    return EvalReport(names, {m.name: m.gamma for m in methods}, p_grid, seeds, values, meta)
