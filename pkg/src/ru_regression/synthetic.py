"""Two-band Gaussian-mixture data models and their exact conditional laws."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import DomainError
from .oracle import GaussianMixture1D

# Coefficient vector of the 16-dimensional model.
HIGHDIM_COEFFS = np.array(
    [0.098, 0.430, 0.206, 0.090, -0.153, 0.292, -0.125, 0.784,
     0.927, -0.233, 0.583, 0.0578, 0.136, 0.851, -0.858, -0.826]
)

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class SyntheticModel:
    kind: str = "one_dim"
    p: float = 0.2
    dim: int = 1
    coeffs: tuple[float, ...] | None = None
    highdim_noise: float = 0.1
    highdim_noise_is_sd: bool = False

    def __post_init__(self):
        if self.kind not in ("one_dim", "high_dim"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        if self.kind == "one_dim" and self.dim != 1:
            raise ValueError("one_dim model requires dim=1")
        if self.kind == "high_dim":
            coeffs = tuple(HIGHDIM_COEFFS) if self.coeffs is None else tuple(float(c) for c in self.coeffs)
            if len(coeffs) != self.dim:
                raise ValueError(f"coeffs has length {len(coeffs)}, expected dim={self.dim}")
            object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def one_dim(cls, p: float = 0.2) -> "SyntheticModel":
        return cls("one_dim", p, 1)

    @classmethod
    def high_dim(cls, p: float = 0.2, noise_is_sd: bool = False, coeffs=None) -> "SyntheticModel":
        c = HIGHDIM_COEFFS if coeffs is None else np.asarray(coeffs, dtype=float)
        return cls("high_dim", p, len(c), tuple(c), highdim_noise_is_sd=noise_is_sd)

    def with_p(self, p: float) -> "SyntheticModel":
        return SyntheticModel(self.kind, p, self.dim, self.coeffs, self.highdim_noise, self.highdim_noise_is_sd)

    @property
    def noise_sd(self) -> float:
        if self.kind == "one_dim":
            return 1.0
        return self.highdim_noise if self.highdim_noise_is_sd else math.sqrt(self.highdim_noise)

    @property
    def x_bounds(self) -> tuple[float, float]:
        return (0.0, 10.0) if self.kind == "one_dim" else (0.0, 1.0)

    def band_means(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Conditional means of the U=0 and U=1 bands at rows of ``x`` (n x d)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "one_dim":
            r = np.sqrt(x[..., 0])
            return r, 4.0 * r + 1.0
        base = x @ np.asarray(self.coeffs)
        return base, base + 0.5

    def regression_function(self, x: np.ndarray) -> np.ndarray:
        m0, m1 = self.band_means(x)
        return (1 - self.p) * m0 + self.p * m1


@dataclass
class RegressionDataset:
    features: np.ndarray
    outcomes: np.ndarray
    split: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.outcomes = np.asarray(self.outcomes, dtype=float).ravel()
        self.split = np.asarray(self.split, dtype=object).ravel()
        n = self.features.shape[0]
        if self.outcomes.shape[0] != n or self.split.shape[0] != n:
            raise ValueError("features, outcomes and split labels disagree on row count")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.outcomes))):
            raise ValueError("dataset contains non-finite entries")
        bad = set(self.split) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split labels {sorted(bad)}")

    def __len__(self):
        return self.outcomes.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == name
        return self.features[mask], self.outcomes[mask]

    def latent(self, name: str | None = None) -> np.ndarray | None:
        u = self.provenance.get("u")
        if u is None or name is None:
            return u
        return u[self.split == name]

    def to_csv(self, path, include_latent: bool = False) -> None:
        header = [f"x{j + 1}" for j in range(self.dim)] + ["y"]
        u = self.latent()
        with_u = include_latent and u is not None
        if with_u:
            header.append("u")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                row = [f"{v:.17g}" for v in self.features[i]] + [f"{self.outcomes[i]:.17g}"]
                if with_u:
                    row.append(str(int(u[i])))
                w.writerow(row)


def _draw(model: SyntheticModel, n: int, rng: np.random.Generator):
    lo, hi = model.x_bounds
    x = rng.uniform(lo, hi, size=(n, model.dim))
    u = rng.binomial(1, model.p, size=n)
    m0, m1 = model.band_means(x)
    y = rng.normal(np.where(u == 1, m1, m0), model.noise_sd)
    return x, y, u


def generate(
    model: SyntheticModel,
    n: int | dict[str, int],
    seed: int | np.random.SeedSequence,
) -> RegressionDataset:
    """Draw a dataset. ``n`` is either a total count (all rows labelled "train")
    or a mapping split name -> count."""
    sizes = {"train": n} if isinstance(n, (int, np.integer)) else dict(n)
    if any(int(k) <= 0 for k in sizes.values()):
        raise ValueError(f"split sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    xs, ys, us, labels = [], [], [], []
    for name in SPLITS:
        if name not in sizes:
            continue
        x, y, u = _draw(model, int(sizes[name]), rng)
        xs.append(x), ys.append(y), us.append(u)
        labels.extend([name] * int(sizes[name]))
    return RegressionDataset(
        np.vstack(xs),
        np.concatenate(ys),
        np.array(labels, dtype=object),
        provenance={"model": model, "seed": seed, "sizes": sizes, "u": np.concatenate(us)},
    )


def conditional_mixture(model: SyntheticModel, x) -> GaussianMixture1D:
    """Exact law of Y given X = x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dim,):
        raise DomainError(f"expected a feature vector of length {model.dim}")
    lo, hi = model.x_bounds
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"x={x} outside the support [{lo}, {hi}]^{model.dim}")
    m0, m1 = model.band_means(x[None, :])
    sd = model.noise_sd
    return GaussianMixture1D([1 - model.p, model.p], [m0[0], m1[0]], [sd, sd])


def read_csv(path, split_fractions=None, seed: int = 0, default_split: str = "train") -> RegressionDataset:
    """Parse a ``x1,...,xd,y`` file; optional trailing ``u`` column is kept as latent.

    Rows are assigned to splits by a seeded permutation when ``split_fractions``
    (train, validation, test) is given, otherwise all rows get ``default_split``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        has_u = bool(header) and header[-1] == "u"
        cols = header[:-1] if has_u else header
        if "y" not in cols:
            raise ValueError(f"{path}: missing column 'y'")
        if cols[-1] != "y":
            raise ValueError(f"{path}: column 'y' must come last among x1..xd,y")
        d = len(cols) - 1
        for j in range(d):
            if cols[j] != f"x{j + 1}":
                raise ValueError(f"{path}: missing column 'x{j + 1}' (found {cols[j]!r})")
        if d == 0:
            raise ValueError(f"{path}: missing column 'x1'")
        rows, us = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[: d + 1]]
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
            if has_u:
                us.append(int(float(row[-1])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    n = data.shape[0]
    split = np.full(n, default_split, dtype=object)
    if split_fractions is not None:
        fr = np.asarray(split_fractions, dtype=float)
        fr = fr / fr.sum()
        perm = np.random.default_rng(seed).permutation(n)
        cuts = np.floor(np.cumsum(fr)[:-1] * n).astype(int)
        for name, idx in zip(SPLITS, np.split(perm, cuts)):
            split[idx] = name
    prov = {"source": str(path), "seed": seed}
    if has_u:
        prov["u"] = np.array(us)
    return RegressionDataset(data[:, :d], data[:, d], split, provenance=prov)


def generate_long_tailed(n: int | dict[str, int], seed, dim: int = 4, p: float = 0.2) -> RegressionDataset:
    """Nonnegative, right-skewed outcomes standing in for length-of-stay data.

    log Y = 0.5 + 0.5 x1 - 0.3 x2 + U + 0.5 Z with X ~ U[0,1]^dim,
    U ~ Bernoulli(p) unobserved and Z ~ N(0, 1).
    """
    sizes = {"train": n} if isinstance(n, (int, np.integer)) else dict(n)
    rng = np.random.default_rng(seed)
    coef = np.zeros(dim)
    coef[:2] = [0.5, -0.3][:dim]
    xs, ys, us, labels = [], [], [], []
    for name in SPLITS:
        if name not in sizes:
            continue
        k = int(sizes[name])
        x = rng.uniform(0.0, 1.0, size=(k, dim))
        u = rng.binomial(1, p, size=k)
        y = np.exp(0.5 + x @ coef + u + 0.5 * rng.standard_normal(k))
        xs.append(x), ys.append(y), us.append(u)
        labels.extend([name] * k)
    return RegressionDataset(np.vstack(xs), np.concatenate(ys), np.array(labels, dtype=object),
                             provenance={"model": "long_tailed", "seed": seed, "sizes": sizes,
                                         "u": np.concatenate(us)})
