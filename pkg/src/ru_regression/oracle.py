"""Ground-truth computations used to check the estimators.

Worst-case risk over the Gamma-band (two independent routes), CVaR, conditional
loss quantiles of Gaussian mixtures and the per-x minimizer of the conditional
RU risk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .losses import DomainError, GammaBand

_SQRT_2PI = np.sqrt(2.0 * np.pi)


class InvariantError(ValueError):
    """A distribution object violates its structural invariants."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteLossDistribution:
    losses: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if losses.shape != probs.shape or losses.size == 0:
            raise InvariantError("losses and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(probs))):
            raise InvariantError("non-finite entries")
        if np.any(probs <= 0):
            raise InvariantError("all probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvariantError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, losses) -> "DiscreteLossDistribution":
        losses = np.asarray(losses, dtype=float).ravel()
        return cls(losses, np.full(losses.size, 1.0 / losses.size))

    def mean(self) -> float:
        return float(self.probs @ self.losses)

    def quantile(self, eta: float) -> float:
        """inf{t : F(t) >= eta}."""
        order = np.argsort(self.losses, kind="stable")
        cdf = np.cumsum(self.probs[order])
        idx = int(np.searchsorted(cdf, eta - 1e-15, side="left"))
        return float(self.losses[order][min(idx, cdf.size - 1)])


def worstcase_risk_discrete(dist: DiscreteLossDistribution, band: GammaBand) -> float:
    """max sum q_i l_i over Gamma^-1 p_i <= q_i <= Gamma p_i, sum q_i = 1.

    Greedy fractional knapsack: start every atom at its floor and pour the
    remaining mass into the largest losses first.
    """
    q = band.inv_gamma * dist.probs
    remaining = 1.0 - q.sum()
    for i in np.argsort(-dist.losses, kind="stable"):
        if remaining <= 0:
            break
        room = (band.gamma - band.inv_gamma) * dist.probs[i]
        add = min(room, remaining)
        q[i] += add
        remaining -= add
    return float(q @ dist.losses)


def worstcase_risk_np(dist: DiscreteLossDistribution, band: GammaBand) -> float:
    """Worst-case risk from the Neyman-Pearson weight function.

    Mass strictly above the eta-quantile is scaled by Gamma, mass strictly below
    by 1/Gamma, and the atom sitting at the quantile takes whatever weight makes
    the total exactly one.
    """
    q_eta = dist.quantile(band.eta)
    above = dist.losses > q_eta
    below = dist.losses < q_eta
    at = ~(above | below)
    w_above = band.gamma * dist.probs[above].sum()
    w_below = band.inv_gamma * dist.probs[below].sum()
    w_at = 1.0 - w_above - w_below
    return float(
        band.gamma * dist.probs[above] @ dist.losses[above]
        + band.inv_gamma * dist.probs[below] @ dist.losses[below]
        + w_at * q_eta * (at.any())
    )


def cvar_discrete(dist: DiscreteLossDistribution, eta: float) -> float:
    """Mean of the upper (1 - eta) tail, splitting the boundary atom."""
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta!r}")
    order = np.argsort(-dist.losses, kind="stable")
    tail = 1.0 - eta
    taken = 0.0
    total = 0.0
    for i in order:
        p = min(dist.probs[i], tail - taken)
        if p <= 0:
            break
        total += p * dist.losses[i]
        taken += p
    return float(total / tail)


@dataclass(frozen=True)
class GaussianMixture1D:
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        s = np.atleast_1d(np.asarray(self.sds, dtype=float))
        if not (w.shape == m.shape == s.shape):
            raise InvariantError("weights, means and sds must have equal length")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise InvariantError("mixture weights must be a probability vector")
        if np.any(s <= 0):
            raise InvariantError("component sds must be positive")
        keep = w > 0
        object.__setattr__(self, "weights", w[keep])
        object.__setattr__(self, "means", m[keep])
        object.__setattr__(self, "sds", s[keep])

    def cdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        return (self.weights * ndtr((y - self.means) / self.sds)).sum(-1)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        z = (y - self.means) / self.sds
        return (self.weights * np.exp(-0.5 * z**2) / (self.sds * _SQRT_2PI)).sum(-1)

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.sds**2 + (self.means - m) ** 2))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        return rng.normal(self.means[comp], self.sds[comp])


def squared_loss_cdf(t, h: float, mix: GaussianMixture1D):
    """P((Y - h)^2 <= t) for Y ~ mix."""
    r = np.sqrt(np.maximum(np.asarray(t, dtype=float), 0.0))
    return mix.cdf(h + r) - mix.cdf(h - r)


def mixture_loss_quantile(
    x_pred: float,
    eta: float,
    mix: GaussianMixture1D,
    tol: float = 1e-10,
    t_max: float | None = None,
    max_expansions: int = 60,
) -> float:
    """eta-quantile of the squared loss (Y - x_pred)^2 under the mixture, by bisection."""
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta!r}")
    if not np.isfinite(x_pred):
        raise DomainError("non-finite prediction")
    hi = t_max if t_max is not None else (abs(x_pred) + np.max(np.abs(mix.means)) + 8 * np.max(mix.sds)) ** 2
    for _ in range(max_expansions):
        if squared_loss_cdf(hi, x_pred, mix) >= eta:
            break
        hi *= 2.0
    else:
        raise ConvergenceError(f"could not bracket the {eta}-quantile below t={hi:g}")
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = squared_loss_cdf(mid, x_pred, mix) - eta
        if abs(f) <= tol:
            return float(mid)
        if f < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(hi, 1e-300):
            break
    return float(0.5 * (lo + hi))


def _tail_moments(m, s, c):
    """E[D^2 1{|D| > c}] and P(|D| > c) for D ~ N(m, s^2), vectorised over components."""
    zu = (c - m) / s
    zl = (-c - m) / s
    phi_u = np.exp(-0.5 * zu**2) / _SQRT_2PI
    phi_l = np.exp(-0.5 * zl**2) / _SQRT_2PI
    sf_u = ndtr(-zu)
    cdf_l = ndtr(zl)
    upper = m**2 * sf_u + 2 * m * s * phi_u + s**2 * (zu * phi_u + sf_u)
    lower = m**2 * cdf_l - 2 * m * s * phi_l + s**2 * (cdf_l - zl * phi_l)
    return upper + lower, sf_u + cdf_l


def conditional_ru_risk(h: float, a: float, mix: GaussianMixture1D, band: GammaBand) -> float:
    """E[L_RU(h, a, Y)] for Y ~ mix and squared base loss, in closed form."""
    m = mix.means - h
    s = mix.sds
    second_moment = float(mix.weights @ (m**2 + s**2))
    c = np.sqrt(max(a, 0.0))
    tail2, ptail = _tail_moments(m, s, c)
    excess = float(mix.weights @ (tail2 - max(a, 0.0) * ptail))
    if a < 0:
        # every loss exceeds a negative level
        excess = second_moment - a
    return band.inv_gamma * second_moment + band.c_lin * a + band.c_relu * excess


def conditional_ru_minimizer(
    mix: GaussianMixture1D,
    band: GammaBand,
    grid_size: int = 41,
    max_rounds: int = 500,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Minimize E[L_RU(h, a, Y)] over (h, a) by grid search then coordinate descent."""
    lo_y = float(np.min(mix.means - 6 * mix.sds))
    hi_y = float(np.max(mix.means + 6 * mix.sds))
    a_hi = (hi_y - lo_y) ** 2
    hs = np.linspace(lo_y, hi_y, grid_size)
    as_ = np.linspace(0.0, a_hi, grid_size)
    vals = np.array([[conditional_ru_risk(h, a, mix, band) for a in as_] for h in hs])
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    h, a = float(hs[i]), float(as_[j])

    opts = {"xatol": 1e-13, "maxiter": 1000}
    prev = np.inf
    for _ in range(max_rounds):
        a = optimize.minimize_scalar(
            lambda v: conditional_ru_risk(h, v, mix, band), bounds=(0.0, a_hi), method="bounded", options=opts
        ).x
        res = optimize.minimize_scalar(
            lambda v: conditional_ru_risk(v, a, mix, band), bounds=(lo_y, hi_y), method="bounded", options=opts
        )
        h = res.x
        if prev - res.fun <= tol * max(1.0, abs(res.fun)):
            break
        prev = res.fun
    else:
        raise ConvergenceError(
            f"coordinate descent did not settle in {max_rounds} rounds (h={h:.6g}, a={a:.6g}, f={res.fun:.6g})"
        )
    # final a-step so the returned level is optimal for the returned h
    a = optimize.minimize_scalar(
        lambda v: conditional_ru_risk(h, v, mix, band), bounds=(0.0, a_hi), method="bounded", options=opts
    ).x
    return float(h), float(a)
