"""Experiment routines shared by the CLI, the scripts and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .evaluation import test_mse, weighted_test_mse
from .losses import GammaBand, ru_loss
from .nn import TrainConfig, train
from .oracle import (
    DiscreteLossDistribution,
    conditional_ru_minimizer,
    cvar_discrete,
    mixture_loss_quantile,
    worstcase_risk_discrete,
    worstcase_risk_np,
)
from .sieve import SieveBasis, SieveFitOptions, default_bounds, fit, jn_schedule, predict
from .synthetic import SyntheticModel, conditional_mixture, generate, generate_long_tailed

log = logging.getLogger(__name__)


def random_loss_distribution(rng: np.random.Generator, min_size: int = 2, max_size: int = 50):
    k = int(rng.integers(min_size, max_size + 1))
    losses = rng.exponential(2.0, size=k)
    if rng.random() < 0.5:
        losses = np.round(losses, 1)  # force ties
    probs = rng.dirichlet(np.ones(k))
    probs = np.maximum(probs, 1e-9)
    probs /= probs.sum()
    return DiscreteLossDistribution(losses, probs)


def min_ru_over_levels(dist: DiscreteLossDistribution, band: GammaBand, resolution: float = 1e-6,
                       points: int = 1001) -> float:
    """min over a of sum_i p_i L_RU with L pinned at each atom, by nested grid refinement.

    The objective is convex and piecewise linear in a, so refining around the
    best grid point never discards the minimiser.
    """
    y = np.sqrt(dist.losses)

    def obj(levels):
        return dist.probs @ ru_loss(0.0, levels[None, :], y[:, None], band)

    lo, hi = float(dist.losses.min()), float(dist.losses.max())
    while True:
        grid = np.linspace(lo, hi, points)
        vals = obj(grid)
        i = int(np.argmin(vals))
        step = grid[1] - grid[0] if points > 1 else 0.0
        if step <= resolution:
            return float(vals[i])
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]


@dataclass
class OracleCheckResult:
    n_cases: int
    np_lp_max_abs: float
    identity_max_abs: float
    identity_tol_max: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def oracle_check(n_cases: int = 1000, seed: int = 0, tol: float = 1e-10, resolution: float = 1e-6,
                 identity_cases: int | None = None) -> OracleCheckResult:
    """NP-weight vs greedy-LP worst-case risk, and the RU/CVaR scalar identity."""
    rng = np.random.default_rng(seed)
    failures = 0
    np_lp, ident, ident_tol = 0.0, 0.0, 0.0
    identity_cases = n_cases if identity_cases is None else identity_cases
    for k in range(n_cases):
        dist = random_loss_distribution(rng)
        band = GammaBand(1.0 + rng.uniform(0.0, 19.0) + 1e-12)
        a = worstcase_risk_discrete(dist, band)
        b = worstcase_risk_np(dist, band)
        diff = abs(a - b)
        np_lp = max(np_lp, diff)
        if diff > tol * max(1.0, abs(a)):
            failures += 1
            log.warning("case %d: greedy %.17g vs NP %.17g", k, a, b)
        if k < identity_cases:
            closed = band.inv_gamma * dist.mean() + band.c_lin * cvar_discrete(dist, band.eta)
            grid_min = min_ru_over_levels(dist, band, resolution)
            # a piecewise-linear objective with slopes bounded by Gamma moves at most Gamma * resolution
            allowed = band.gamma * resolution
            d = abs(grid_min - closed)
            ident = max(ident, d)
            ident_tol = max(ident_tol, allowed)
            if d > allowed or abs(closed - a) > 1e-9 * max(1.0, abs(a)):
                failures += 1
                log.warning("case %d: RU identity %.17g vs %.17g (worst case %.17g)", k, grid_min, closed, a)
    return OracleCheckResult(n_cases, np_lp, ident, ident_tol, failures)


def oracle_on_grid(model: SyntheticModel, band: GammaBand, x_grid) -> np.ndarray:
    """(len(x_grid), 2) array of per-x conditional RU minimisers (h*, alpha*)."""
    return np.array([conditional_ru_minimizer(conditional_mixture(model, np.atleast_1d(x)), band)
                     for x in np.asarray(x_grid, dtype=float)])


def sieve_rate(n_grid=(500, 2000, 8000), gamma: float = 4.0, p: float = 0.2, seeds=(0, 1, 2),
               p_smooth: float = 2.0, kind: str = "polynomial", grid_points: int = 200,
               opts: SieveFitOptions | None = None) -> dict:
    """L2 grid distance between sieve fits and the per-x oracle, for growing n.

    Returns ``{"n": [...], "J": [...], "errors": (n_seeds, n_n) array, "mean": [...]}``.
    """
    model = SyntheticModel.one_dim(p)
    band = GammaBand(gamma)
    x_grid = np.linspace(0.0, 10.0, grid_points)
    target = oracle_on_grid(model, band, x_grid)
    errors = np.empty((len(seeds), len(n_grid)))
    js = [jn_schedule(n, p_smooth, 1) for n in n_grid]
    for i, s in enumerate(seeds):
        for j, (n, deg) in enumerate(zip(n_grid, js)):
            ds = generate(model, int(n), np.random.SeedSequence([int(s), int(n)]))
            hb, mu = default_bounds(ds.outcomes)
            basis = SieveBasis(kind, deg, 1, x_lower=(0.0,), x_upper=(10.0,), h_bound=hb, alpha_upper=mu)
            h, a = predict(fit(ds, basis, band, opts), x_grid)
            errors[i, j] = np.sqrt(np.mean((h - target[:, 0]) ** 2 + (a - target[:, 1]) ** 2))
            log.info("seed %d n %d J %d: L2 error %.4f", s, n, deg, errors[i, j])
    return {"n": list(n_grid), "J": js, "seeds": list(seeds), "errors": errors, "mean": errors.mean(axis=0)}


def alpha_tracking(gamma: float, seed: int = 0, p: float = 0.2, config: TrainConfig | None = None,
                   sizes=(7000, 1400), x_grid=None) -> dict:
    """Train RU on the one-dim model and compare alpha-hat with the loss quantile at h-hat."""
    model = SyntheticModel.one_dim(p)
    band = GammaBand(gamma)
    cfg = config or TrainConfig(mode="ru", seed=seed)
    ds = generate(model, {"train": sizes[0], "validation": sizes[1]}, np.random.SeedSequence([seed, 0]))
    ru, _ = train(ds, cfg, band=band)
    xs = np.linspace(0.5, 9.5, 91) if x_grid is None else np.asarray(x_grid, dtype=float)
    h = ru(xs)
    a = ru.alpha(xs)
    q = np.array([mixture_loss_quantile(hi, band.eta, conditional_mixture(model, [x])) for x, hi in zip(xs, h)])
    rel = np.abs(a - q) / q
    return {"x": xs, "h": h, "alpha": a, "quantile": q, "mean_rel_error": float(rel.mean())}


def long_tailed_tradeoff(gamma: float = 3.0, seed: int = 0, sizes=(7000, 1400, 10000)) -> dict:
    """Standard ERM vs RU on skewed nonnegative outcomes: plain and outcome-weighted test MSE."""
    ds = generate_long_tailed({"train": sizes[0], "validation": sizes[1], "test": sizes[2]},
                              np.random.SeedSequence([seed, 7]))
    erm, _ = train(ds, TrainConfig(mode="erm", seed=seed))
    ru, _ = train(ds, TrainConfig(mode="ru", seed=seed), band=GammaBand(gamma))
    return {
        "erm_mse": test_mse(erm, ds), "ru_mse": test_mse(ru, ds),
        "erm_weighted": weighted_test_mse(erm, ds), "ru_weighted": weighted_test_mse(ru, ds),
    }
