"""Truncated polynomial / spline sieve estimators for the RU objective."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import DomainError, GammaBand, SquaredLoss, ru_loss, ru_loss_grad
from .oracle import ConvergenceError

log = logging.getLogger(__name__)

MAX_TENSOR_DIM = 3


@dataclass(frozen=True)
class SieveBasis:
    """Tensor-product basis on the rescaled unit cube plus clamp bounds.

    For ``kind="polynomial"`` each coordinate contributes monomials up to
    ``degree``. For ``kind="spline"`` each coordinate contributes the truncated
    power basis of the given ``order`` with ``degree`` uniform interior knots
    (unless ``knots`` is supplied).
    """

    kind: str = "polynomial"
    degree: int = 3
    dim: int = 1
    order: int = 4
    knots: tuple[float, ...] | None = None
    x_lower: tuple[float, ...] = (0.0,)
    x_upper: tuple[float, ...] = (1.0,)
    h_bound: float = math.inf
    alpha_upper: float = math.inf
    max_mesh_ratio: float = 10.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "spline"):
            raise ValueError(f"unknown sieve kind {self.kind!r}")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not 1 <= self.dim <= MAX_TENSOR_DIM:
            raise ValueError(f"tensor-product sieves support 1 <= dim <= {MAX_TENSOR_DIM}")
        lo = tuple(float(v) for v in np.broadcast_to(self.x_lower, (self.dim,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.x_upper, (self.dim,)))
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("input bounds must satisfy lower < upper")
        object.__setattr__(self, "x_lower", lo)
        object.__setattr__(self, "x_upper", hi)
        if not (self.h_bound > 0 and self.alpha_upper > 0):
            raise ValueError("clamp bounds must satisfy lower < upper")
        if self.kind == "spline":
            if self.order < 1:
                raise ValueError("spline order must be >= 1")
            knots = self.knots
            if knots is None:
                knots = tuple((j + 1) / (self.degree + 1) for j in range(self.degree))
            knots = tuple(float(t) for t in knots)
            if any(not 0 < t < 1 for t in knots) or any(b <= a for a, b in zip(knots, knots[1:])):
                raise ValueError("knots must be strictly increasing inside (0, 1)")
            if knots:
                gaps = np.diff([0.0, *knots, 1.0])
                if gaps.max() / gaps.min() > self.max_mesh_ratio:
                    raise ValueError(f"knot mesh ratio {gaps.max() / gaps.min():.3g} exceeds {self.max_mesh_ratio}")
            object.__setattr__(self, "knots", knots)

    @property
    def per_coord(self) -> int:
        if self.kind == "polynomial":
            return self.degree + 1
        return self.order + len(self.knots)

    @property
    def n_features(self) -> int:
        return self.per_coord**self.dim

    @property
    def clamped(self) -> bool:
        return math.isfinite(self.h_bound) or math.isfinite(self.alpha_upper)

    def unclamped(self) -> "SieveBasis":
        return SieveBasis(self.kind, self.degree, self.dim, self.order, self.knots,
                          self.x_lower, self.x_upper, math.inf, math.inf, self.max_mesh_ratio)

    def rescale(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.dim == 1 else x[None, :]
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected {self.dim} input coordinates, got {x.shape[-1]}")
        u = (x - np.array(self.x_lower)) / (np.array(self.x_upper) - np.array(self.x_lower))
        tol = 1e-12
        if np.any(u < -tol) or np.any(u > 1 + tol):
            raise DomainError("input outside the basis support after rescaling to [0, 1]")
        return np.clip(u, 0.0, 1.0)


def _coord_features(basis: SieveBasis, u: np.ndarray) -> np.ndarray:
    """(n,) -> (n, per_coord)."""
    if basis.kind == "polynomial":
        return u[:, None] ** np.arange(basis.degree + 1)
    r = basis.order
    poly = u[:, None] ** np.arange(r)
    if not basis.knots:
        return poly
    trunc = np.maximum(u[:, None] - np.array(basis.knots), 0.0) ** (r - 1)
    if r == 1:
        trunc = (u[:, None] > np.array(basis.knots)).astype(float)
    return np.hstack([poly, trunc])


def features(basis: SieveBasis, x) -> np.ndarray:
    """Design matrix (n, n_features); a single point gives shape (n_features,)."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and basis.dim > 1 and x_arr.shape[0] == basis.dim)
    u = basis.rescale(np.atleast_1d(x_arr))
    per = [_coord_features(basis, u[:, j]) for j in range(basis.dim)]
    phi = per[0]
    for f in per[1:]:
        phi = (phi[:, :, None] * f[:, None, :]).reshape(phi.shape[0], -1)
    return phi[0] if single else phi


def feature_labels(basis: SieveBasis) -> list[str]:
    if basis.kind == "polynomial":
        one = [f"x^{k}" for k in range(basis.degree + 1)]
    else:
        one = [f"x^{k}" for k in range(basis.order)] + [f"(x-{t:g})_+^{basis.order - 1}" for t in basis.knots]
    if basis.dim == 1:
        return one
    return ["*".join(f"{lab.replace('x', f'x{j + 1}')}" for j, lab in enumerate(combo))
            for combo in itertools.product(one, repeat=basis.dim)]


@dataclass
class SieveModel:
    basis: SieveBasis
    h_coef: np.ndarray
    alpha_coef: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h_coef = np.asarray(self.h_coef, dtype=float)
        self.alpha_coef = np.asarray(self.alpha_coef, dtype=float)
        k = self.basis.n_features
        if self.h_coef.shape != (k,) or self.alpha_coef.shape != (k,):
            raise ValueError(f"coefficient vectors must have length {k}")

    def __call__(self, x) -> np.ndarray:
        return predict(self, x)[0]

    def alpha(self, x) -> np.ndarray:
        return predict(self, x)[1]

    def to_dict(self) -> dict:
        b = self.basis
        return {
            "basis": {
                "kind": b.kind, "degree": b.degree, "dim": b.dim, "order": b.order,
                "knots": list(b.knots) if b.knots is not None else None,
                "x_lower": list(b.x_lower), "x_upper": list(b.x_upper),
                "h_bound": _enc(b.h_bound), "alpha_upper": _enc(b.alpha_upper),
            },
            "h_coef": self.h_coef.tolist(),
            "alpha_coef": self.alpha_coef.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SieveModel":
        b = dict(d["basis"])
        b["h_bound"] = _dec(b["h_bound"])
        b["alpha_upper"] = _dec(b["alpha_upper"])
        b["knots"] = tuple(b["knots"]) if b["knots"] is not None else None
        b["x_lower"] = tuple(b["x_lower"])
        b["x_upper"] = tuple(b["x_upper"])
        return cls(SieveBasis(**b), d["h_coef"], d["alpha_coef"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SieveModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _enc(v: float):
    return v if math.isfinite(v) else "inf"


def _dec(v):
    return math.inf if v == "inf" else float(v)


def predict(model: SieveModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Clamped (h, alpha): h in [-2B, 2B], alpha in [0, M_u]."""
    phi = features(model.basis, x)
    b = model.basis
    h = np.clip(phi @ model.h_coef, -b.h_bound, b.h_bound)
    lo_a = 0.0 if math.isfinite(b.alpha_upper) else -math.inf
    a = np.clip(phi @ model.alpha_coef, lo_a, b.alpha_upper)
    return h, a


def _objective_and_grad(phi, y, theta_h, theta_a, basis, band, loss, want_grad=True):
    raw_h = phi @ theta_h
    raw_a = phi @ theta_a
    lo_a = 0.0 if math.isfinite(basis.alpha_upper) else -math.inf
    h = np.clip(raw_h, -basis.h_bound, basis.h_bound)
    a = np.clip(raw_a, lo_a, basis.alpha_upper)
    obj = float(np.mean(ru_loss(h, a, y, band, loss)))
    if not want_grad:
        return obj, None, None
    dz, da = ru_loss_grad(h, a, y, band, loss)
    # zero subgradient only where the clamp is strictly active
    dz = dz * ((raw_h >= -basis.h_bound) & (raw_h <= basis.h_bound))
    da = da * ((raw_a >= lo_a) & (raw_a <= basis.alpha_upper))
    n = y.shape[0]
    return obj, phi.T @ dz / n, phi.T @ da / n


def ru_objective(basis: SieveBasis, h_coef, alpha_coef, x, y, band: GammaBand, loss=None) -> float:
    """Empirical RU risk of the sieve model with the given coefficients."""
    phi = features(basis, x)
    return _objective_and_grad(phi, np.asarray(y, float), np.asarray(h_coef, float),
                               np.asarray(alpha_coef, float), basis, band, loss or SquaredLoss(), False)[0]


@dataclass
class SieveFitOptions:
    learning_rate: float = 0.05
    max_iter: int = 20000
    grad_tol: float = 1e-7
    precondition: bool = True
    lr_decay: float = 2000.0
    strict: bool = False


def default_bounds(y_train: np.ndarray) -> tuple[float, float]:
    """(2B, M_u) with B = max|y| on the train split and M_u = squared loss at a 4B residual."""
    b = float(np.max(np.abs(y_train)))
    return 2.0 * b, (4.0 * b) ** 2


def fit(dataset, basis: SieveBasis, band: GammaBand, opts: SieveFitOptions | None = None,
        loss: SquaredLoss | None = None) -> SieveModel:
    """Full-batch Adam on the empirical RU risk over the sieve coefficients.

    With ``precondition`` the iteration runs in the coordinates of the
    orthonormalised design (QR of the feature matrix), which is the same convex
    problem under an invertible linear change of variables.
    """
    opts = opts or SieveFitOptions()
    loss = loss or SquaredLoss()
    x, y = dataset.subset("train")
    if y.size == 0:
        raise ValueError("empty train split")
    phi = features(basis, x)
    k = phi.shape[1]
    if opts.precondition:
        _, r = np.linalg.qr(phi / np.sqrt(len(y)))
        r_inv = np.linalg.pinv(r)
    else:
        r_inv = np.eye(k)
    psi = phi @ r_inv

    # start h at the least-squares fit and alpha at the mean squared residual
    beta_h = np.linalg.lstsq(psi, y, rcond=None)[0]
    resid = y - np.clip(psi @ beta_h, -basis.h_bound, basis.h_bound)
    beta_a = np.linalg.lstsq(psi, np.full_like(y, np.mean(resid**2)), rcond=None)[0]

    m = np.zeros(2 * k)
    v = np.zeros(2 * k)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best = (np.inf, beta_h.copy(), beta_a.copy())
    initial = None
    gnorm = np.inf
    converged = False
    for t in range(1, opts.max_iter + 1):
        obj, gh, ga = _objective_and_grad(psi, y, beta_h, beta_a, basis, band, loss)
        if not np.isfinite(obj):
            raise ConvergenceError(f"objective became non-finite at iteration {t}")
        if initial is None:
            initial = obj
        if obj < best[0]:
            best = (obj, beta_h.copy(), beta_a.copy())
        g = np.concatenate([gh, ga])
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.grad_tol:
            converged = True
            break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        lr = opts.learning_rate / np.sqrt(1.0 + t / opts.lr_decay)
        step = lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        beta_h = beta_h - step[:k]
        beta_a = beta_a - step[k:]
    if not converged:
        msg = f"sieve fit hit max_iter={opts.max_iter} with subgradient norm {gnorm:.3g}"
        if opts.strict:
            raise ConvergenceError(msg)
        log.debug(msg)
    obj, beta_h, beta_a = best
    return SieveModel(basis, r_inv @ beta_h, r_inv @ beta_a,
                      info={"objective": obj, "initial_objective": initial, "grad_norm": gnorm,
                            "converged": converged, "iterations": t})


def jn_schedule(n: int, p_smooth: float = 2.0, d: int = 1) -> int:
    """Sieve size round((n / ln n)^(1 / (2p + d))), at least 1."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if p_smooth <= 0:
        raise ValueError("p_smooth must be positive")
    return max(1, int(round((n / math.log(n)) ** (1.0 / (2.0 * p_smooth + d)))))
