"""Base losses and the Rockafellar-Uryasev (RU) augmented loss.

All functions broadcast over numpy arrays; scalars come back as 0-d floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised for inputs outside a function's mathematical domain."""


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


@dataclass(frozen=True)
class SquaredLoss:
    """L(yhat, y) = (y - yhat)^2."""

    kind: str = "squared"

    def value(self, yhat, y):
        return (np.asarray(y) - np.asarray(yhat)) ** 2

    def d1(self, yhat, y):
        return 2.0 * (np.asarray(yhat) - np.asarray(y))

    def d2(self, yhat, y):
        return np.full(np.broadcast(np.asarray(yhat), np.asarray(y)).shape, 2.0)


BaseLoss = SquaredLoss

_LOSSES = {"squared": SquaredLoss}


def get_loss(kind: str = "squared") -> SquaredLoss:
    try:
        return _LOSSES[kind]()
    except KeyError:
        raise ValueError(f"unknown loss kind {kind!r}; available: {sorted(_LOSSES)}") from None


@dataclass(frozen=True)
class GammaBand:
    """Robustness level Gamma > 1 and the coefficients derived from it.

    ``eta`` is the quantile level Gamma / (Gamma + 1) at which the worst-case
    likelihood ratio jumps from 1/Gamma to Gamma.
    """

    gamma: float
    inv_gamma: float = field(init=False)
    c_lin: float = field(init=False)
    c_relu: float = field(init=False)
    eta: float = field(init=False)

    def __post_init__(self):
        g = float(self.gamma)
        if not math.isfinite(g) or g <= 1.0:
            raise DomainError(f"gamma must be a finite number > 1, got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "inv_gamma", 1.0 / g)
        object.__setattr__(self, "c_lin", 1.0 - 1.0 / g)
        object.__setattr__(self, "c_relu", g - 1.0 / g)
        object.__setattr__(self, "eta", g / (g + 1.0))


def ru_loss(z, a, y, band: GammaBand, loss: SquaredLoss | None = None):
    """Gamma^-1 L(z, y) + (1 - Gamma^-1) a + (Gamma - Gamma^-1) (L(z, y) - a)_+."""
    loss = loss or SquaredLoss()
    z, a, y = np.asarray(z, float), np.asarray(a, float), np.asarray(y, float)
    _check_finite(z, a, y)
    lv = loss.value(z, y)
    return band.inv_gamma * lv + band.c_lin * a + band.c_relu * np.maximum(lv - a, 0.0)


def ru_loss_grad(z, a, y, band: GammaBand, loss: SquaredLoss | None = None):
    """Subgradient (d/dz, d/da) of :func:`ru_loss`.

    At the kink L(z, y) == a the ReLU branch is treated as inactive.
    """
    loss = loss or SquaredLoss()
    z, a, y = np.asarray(z, float), np.asarray(a, float), np.asarray(y, float)
    _check_finite(z, a, y)
    active = (loss.value(z, y) > a).astype(float)
    dz = (band.inv_gamma + band.c_relu * active) * loss.d1(z, y)
    da = band.c_lin - band.c_relu * active
    return dz, da
