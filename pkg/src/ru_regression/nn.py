"""Feed-forward ReLU networks, Adam, and the ERM / RU training loops.

Everything is plain numpy with hand-written backpropagation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .losses import GammaBand, SquaredLoss, ru_loss, ru_loss_grad

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class MLP:
    """ReLU hidden layers, identity output. ``weights[k]`` has shape (fan_in, fan_out)."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    softplus_output: bool = False

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MLP":
        return MLP(list(self.layer_sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.softplus_output)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


def init(layer_sizes, seed, softplus_output: bool = False) -> MLP:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"need at least two positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(sizes, weights, biases, softplus_output)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(net: MLP, x):
    """Returns (outputs of shape (n,), cache of layer inputs and pre-activations)."""
    a = np.asarray(x, dtype=net.weights[0].dtype)
    if a.ndim == 1:
        a = a[:, None] if net.layer_sizes[0] == 1 else a[None, :]
    if a.shape[-1] != net.layer_sizes[0]:
        raise ValueError(f"input dimension {a.shape[-1]} does not match network input {net.layer_sizes[0]}")
    inputs, pre = [], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if k < last else z
    out = a[:, 0]
    if net.softplus_output:
        out = _softplus(out)
    return out, (inputs, pre)


def backward(net: MLP, cache, d_out) -> list[np.ndarray]:
    """Gradients of sum_i d_out[i] * net(x_i) w.r.t. ``net.params`` (same order)."""
    inputs, pre = cache
    g = np.asarray(d_out, dtype=pre[-1].dtype)[:, None]
    if net.softplus_output:
        g = g * _sigmoid(pre[-1])
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k].T) * (pre[k - 1] > 0)
    return grads


@dataclass
class RUModel:
    h_net: MLP
    alpha_net: MLP
    band: GammaBand

    def __post_init__(self):
        if self.h_net.layer_sizes[0] != self.alpha_net.layer_sizes[0]:
            raise ValueError("h and alpha networks must take the same input dimension")
        if self.h_net.layer_sizes[-1] != 1 or self.alpha_net.layer_sizes[-1] != 1:
            raise ValueError("h and alpha networks must have scalar outputs")

    def __call__(self, x) -> np.ndarray:
        return self.h_net(x)

    def alpha(self, x) -> np.ndarray:
        return self.alpha_net(x)

    @property
    def params(self):
        return self.h_net.params + self.alpha_net.params

    def copy(self) -> "RUModel":
        return RUModel(self.h_net.copy(), self.alpha_net.copy(), self.band)


def ru_risk(model: RUModel, x, y, loss: SquaredLoss | None = None) -> float:
    z = model.h_net(x)
    a = model.alpha_net(x)
    return float(np.mean(ru_loss(z, a, y, model.band, loss)))


def mse(net, x, y) -> float:
    return float(np.mean((np.asarray(y) - net(x)) ** 2))


def backward_ru(model: RUModel, x, y, loss: SquaredLoss | None = None, batch_index: int | None = None):
    """Batch-mean RU risk and its gradients: (risk, h_grads, alpha_grads)."""
    z, cache_h = forward(model.h_net, x)
    a, cache_a = forward(model.alpha_net, x)
    y = np.asarray(y, dtype=z.dtype)
    n = y.shape[0]
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(a))):
        raise TrainingError(f"non-finite network output in batch {batch_index}")
    risk = float(np.mean(ru_loss(z, a, y, model.band, loss)))
    dz, da = ru_loss_grad(z, a, y, model.band, loss)
    gh = backward(model.h_net, cache_h, dz / n)
    ga = backward(model.alpha_net, cache_a, da / n)
    if not all(np.all(np.isfinite(g)) for g in gh + ga):
        raise TrainingError(f"non-finite gradient in batch {batch_index}")
    return risk, gh, ga


def backward_erm(net: MLP, x, y, loss: SquaredLoss | None = None, batch_index: int | None = None):
    """Batch-mean empirical risk and its gradients."""
    loss = loss or SquaredLoss()
    z, cache = forward(net, x)
    y = np.asarray(y, dtype=z.dtype)
    risk = float(np.mean(loss.value(z, y)))
    grads = backward(net, cache, loss.d1(z, y) / y.shape[0])
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingError(f"non-finite gradient in batch {batch_index}")
    return risk, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grads, lr: float):
    """One bias-corrected Adam update, in place. Returns (state, params)."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state, params


@dataclass
class TrainConfig:
    mode: str = "erm"
    epochs: int = 100
    batch_size: int = 1750
    learning_rate: float = 1e-2
    optimizer: str = "adam"
    seed: int = 0
    hidden: tuple[int, ...] | None = None
    validate_every: str = "epoch"
    alpha_softplus: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        if self.mode not in ("erm", "ru"):
            raise ValueError(f"mode must be 'erm' or 'ru', got {self.mode!r}")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.validate_every not in ("epoch", "step"):
            raise ValueError("validate_every must be 'epoch' or 'step'")
        if self.hidden is None:
            self.hidden = (128, 128) if self.mode == "erm" else (64, 64)
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainHistory:
    train_objective: list[float] = field(default_factory=list)
    val_objective: list[float] = field(default_factory=list)
    best_index: int = -1
    initial_val: float = float("nan")

    @property
    def best_val(self) -> float:
        return self.val_objective[self.best_index]


def _cast(net: MLP, dtype) -> MLP:
    net.weights = [w.astype(dtype) for w in net.weights]
    net.biases = [b.astype(dtype) for b in net.biases]
    return net


def train(dataset, config: TrainConfig, band: GammaBand | None = None, loss: SquaredLoss | None = None):
    """Mini-batch Adam on the train split with best-validation snapshotting.

    Returns ``(model, history)``; the model is an :class:`MLP` in ERM mode and an
    :class:`RUModel` in RU mode.
    """
    loss = loss or SquaredLoss()
    if config.mode == "ru" and band is None:
        raise ValueError("RU training requires a GammaBand")
    x_tr, y_tr = dataset.subset("train")
    x_va, y_va = dataset.subset("validation")
    if len(y_tr) == 0 or len(y_va) == 0:
        raise ValueError("dataset needs non-empty train and validation splits")
    dtype = np.dtype(config.dtype)
    x_tr, y_tr = x_tr.astype(dtype), y_tr.astype(dtype)
    x_va, y_va = x_va.astype(dtype), y_va.astype(dtype)

    ss = np.random.SeedSequence(config.seed)
    s_h, s_a, s_shuffle = ss.spawn(3)
    sizes = [dataset.dim, *config.hidden, 1]
    shuffle_rng = np.random.default_rng(s_shuffle)

    if config.mode == "erm":
        model = _cast(init(sizes, s_h), dtype)

        def step(xb, yb, i):
            return backward_erm(model, xb, yb, loss, i)[1]

        def objective(m):
            return float(np.mean(loss.value(m(x_va), y_va)))

        params = model.params
    else:
        model = RUModel(
            _cast(init(sizes, s_h), dtype),
            _cast(init(sizes, s_a, softplus_output=config.alpha_softplus), dtype),
            band,
        )

        def step(xb, yb, i):
            _, gh, ga = backward_ru(model, xb, yb, loss, i)
            return gh + ga

        def objective(m):
            return ru_risk(m, x_va, y_va, loss)

        params = model.params

    state = AdamState.zeros_like(params)
    hist = TrainHistory()
    hist.initial_val = objective(model)
    best, best_val = model.copy(), hist.initial_val
    n = len(y_tr)
    batch = 0

    def check(epoch):
        nonlocal best, best_val
        val = objective(model)
        if not np.isfinite(val):
            raise TrainingError(f"validation objective diverged at epoch {epoch}")
        hist.val_objective.append(val)
        if val <= best_val:
            best, best_val = model.copy(), val
            hist.best_index = len(hist.val_objective) - 1

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            grads = step(x_tr[idx], y_tr[idx], batch)
            adam_step(state, params, grads, config.learning_rate)
            batch += 1
            if config.validate_every == "step":
                check(epoch)
        if config.validate_every == "epoch":
            check(epoch)
        log.debug("epoch %d val %.6g", epoch, hist.val_objective[-1])
    if hist.best_index < 0:
        # no epoch beat the untrained network; keep the initial snapshot
        hist.best_index = int(np.argmin(hist.val_objective))
    return best, hist


def _net_to_dict(net: MLP) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "softplus_output": net.softplus_output,
        "dtype": str(net.weights[0].dtype),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> MLP:
    dtype = np.dtype(d.get("dtype", "float64"))
    return MLP(
        list(d["layer_sizes"]),
        [np.array(w, dtype=dtype) for w in d["weights"]],
        [np.array(b, dtype=dtype) for b in d["biases"]],
        bool(d.get("softplus_output", False)),
    )


def save_checkpoint(model, path, metadata: dict | None = None) -> None:
    """JSON checkpoint; Python float repr makes the round trip exact."""
    if isinstance(model, RUModel):
        body = {"type": "ru", "gamma": model.band.gamma,
                "h_net": _net_to_dict(model.h_net), "alpha_net": _net_to_dict(model.alpha_net)}
    else:
        body = {"type": "mlp", "net": _net_to_dict(model)}
    body["version"] = CHECKPOINT_VERSION
    body["metadata"] = metadata or {}
    Path(path).write_text(json.dumps(body))


def load_checkpoint(path):
    body = json.loads(Path(path).read_text())
    if body.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {body.get('version')!r}")
    if body["type"] == "ru":
        return RUModel(_net_from_dict(body["h_net"]), _net_from_dict(body["alpha_net"]), GammaBand(body["gamma"]))
    return _net_from_dict(body["net"])


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(d["hidden"])
    return d
