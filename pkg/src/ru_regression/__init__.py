"""Rockafellar-Uryasev regression: worst-case risk minimisation under bounded
conditional distribution shift, with neural and sieve estimators."""

from .losses import DomainError, GammaBand, SquaredLoss, get_loss, ru_loss, ru_loss_grad
from .oracle import (
    DiscreteLossDistribution,
    GaussianMixture1D,
    conditional_ru_minimizer,
    conditional_ru_risk,
    cvar_discrete,
    mixture_loss_quantile,
    worstcase_risk_discrete,
    worstcase_risk_np,
)
from .synthetic import RegressionDataset, SyntheticModel, conditional_mixture, generate, read_csv

__version__ = "0.1.0"

__all__ = [
    "DiscreteLossDistribution", "DomainError", "GammaBand", "GaussianMixture1D", "RegressionDataset",
    "SquaredLoss", "SyntheticModel", "conditional_mixture", "conditional_ru_minimizer", "conditional_ru_risk",
    "cvar_discrete", "generate", "get_loss", "mixture_loss_quantile", "read_csv", "ru_loss", "ru_loss_grad",
    "worstcase_risk_discrete", "worstcase_risk_np",
]
