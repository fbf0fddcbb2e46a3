"""Feed-forward price network: fixed 128/64/32 hidden topology, trained by
mini-batch backpropagation with Adam and validation-based early stopping.

The output unit is linear and works directly in log-price space. Training
expects standardized inputs; whoever assembles the design matrix owns the
input scaling (see convoluted.Stage1Model).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core_types import DesignMatrix

HIDDEN_WIDTHS = (128, 64, 32)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_deriv(z):
    return (z > 0.0).astype(np.float64)


def _tanh_deriv(z):
    t = np.tanh(z)
    return 1.0 - t * t


# smooth tanh exists for gradient-check fixtures; relu kinks can produce
# false finite-difference mismatches at exactly-zero pre-activations
ACTIVATIONS = {
    "relu": (_relu, _relu_deriv),
    "tanh": (np.tanh, _tanh_deriv),
}


class TrainingDiverged(RuntimeError):
    """Loss went NaN/Inf; `epoch` is where it happened."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


@dataclass(eq=False)
class Network:
    """Parameters for one [input, 128, 64, 32, 1] network."""

    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]
    activation: str
    seed: int

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        widths = self.widths
        if widths[1:] != (*HIDDEN_WIDTHS, 1):
            raise ValueError(f"hidden widths fixed to {HIDDEN_WIDTHS}, got {widths}")
        for W, b in zip(self.weights, self.biases):
            if b.shape != (W.shape[1],):
                raise ValueError("bias/weight shape mismatch")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(W.shape[1] for W in self.weights))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def parameter_count(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.seed,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.activation == other.activation
            and self.seed == other.seed
            and len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation,
            "seed": self.seed,
            "weights": [W.tolist() for W in self.weights],  # row-major
            "biases": [b.tolist() for b in self.biases],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        return cls(
            [np.asarray(W, dtype=np.float64) for W in d["weights"]],
            [np.asarray(b, dtype=np.float64) for b in d["biases"]],
            d["activation"],
            d["seed"],
        )

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    patience: int = 25
    val_fraction: float = 0.1
    seed: int = 0
    # log prices sit near 14; seeding the output bias with the target mean
    # saves Adam from spending ~100 epochs ramping it up from zero
    center_output_bias: bool = True
    standardize_target: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0.0 < self.val_fraction < 0.5):
            raise ValueError("val_fraction must be in (0, 0.5)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer != "adam":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_network(input_dim: int, seed: int, activation: str = "relu") -> Network:
    """He-style init: weights ~ N(0, 2/fan_in), biases zero."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    widths = (input_dim, *HIDDEN_WIDTHS, 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, activation, seed)


def forward(net: Network, rows: np.ndarray) -> np.ndarray:
    """Predicted log prices, one per row. Linear output unit."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != net.input_dim:
        raise ValueError(f"rows have {rows.shape[1]} columns, network expects {net.input_dim}")
    act, _ = ACTIVATIONS[net.activation]
    a = rows
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        a = act(a @ W + b)
    return (a @ net.weights[-1] + net.biases[-1]).ravel()


def loss_and_grads(net: Network, rows: np.ndarray, targets: np.ndarray, corrupt_layer: int | None = None):
    """MSE loss and its gradients w.r.t. every weight/bias.

    corrupt_layer is a test-only hook that flips the sign of one layer's
    weight gradient so gradient_check can prove it detects broken backprop.
    """
    rows = np.atleast_2d(rows)
    m = rows.shape[0]
    act, act_deriv = ACTIVATIONS[net.activation]
    pre, post = [], [rows]
    a = rows
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ W + b
        a = act(z)
        pre.append(z)
        post.append(a)
    out = (a @ net.weights[-1] + net.biases[-1]).ravel()
    err = out - targets
    loss = float(err @ err) / m

    d = (2.0 / m) * err[:, None]  # dL/d(output)
    grads_W = [np.empty(0)] * len(net.weights)
    grads_b = [np.empty(0)] * len(net.biases)
    grads_W[-1] = post[-1].T @ d
    grads_b[-1] = d.sum(axis=0)
    upstream = d @ net.weights[-1].T
    for layer in range(len(net.weights) - 2, -1, -1):
        dz = upstream * act_deriv(pre[layer])
        grads_W[layer] = post[layer].T @ dz
        grads_b[layer] = dz.sum(axis=0)
        if layer > 0:
            upstream = dz @ net.weights[layer].T
    if corrupt_layer is not None:
        grads_W[corrupt_layer] = -grads_W[corrupt_layer]
    return loss, grads_W, grads_b


@dataclass
class TrainHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.train_mse)

    @property
    def best_epoch(self) -> int:
        return int(np.argmin(self.val_mse))

    def to_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        for i, (t, v) in enumerate(zip(self.train_mse, self.val_mse)):
            lines.append(f"{i},{t!r},{v!r}")
        return "\n".join(lines) + "\n"


def train(net: Network, dm: DesignMatrix, cfg: TrainConfig) -> tuple[Network, TrainHistory]:
    """Mini-batch Adam on MSE with early stopping.

    Holds out cfg.val_fraction of the rows; the returned network carries the
    parameters from the best validation epoch. Deterministic per
    (seed, data, config). Raises TrainingDiverged on NaN/Inf loss.
    """
    if dm.standardization is None:
        raise ValueError("train requires a standardized design matrix")
    if dm.n < 10:
        raise ValueError(f"need at least 10 rows to train, got {dm.n}")

    rng = np.random.default_rng(cfg.seed)
    n_val = max(1, int(round(cfg.val_fraction * dm.n)))
    perm = rng.permutation(dm.n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    X_tr, X_val = dm.X[tr_idx], dm.X[val_idx]
    y_tr, y_val = dm.y[tr_idx], dm.y[val_idx]

    y_shift, y_scale = 0.0, 1.0
    if cfg.standardize_target:
        y_shift = float(y_tr.mean())
        y_scale = float(y_tr.std(ddof=1)) or 1.0
        y_tr = (y_tr - y_shift) / y_scale
        y_val = (y_val - y_shift) / y_scale

    net = net.copy()
    if cfg.center_output_bias:
        net.biases[-1][:] = y_tr.mean()

    params = net.weights + net.biases
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    step = 0

    history = TrainHistory()
    best_val = np.inf
    best_params = None
    stale = 0
    n_tr = len(tr_idx)
    # history losses are reported in log-price units even when the target is
    # standardized internally (MSE scales by y_scale^2)
    unit = y_scale * y_scale

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, gW, gb = loss_and_grads(net, X_tr[batch], y_tr[batch])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            step += 1
            grads = gW + gb
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for i, g in enumerate(grads):
                mom[i] = cfg.beta1 * mom[i] + (1.0 - cfg.beta1) * g
                vel[i] = cfg.beta2 * vel[i] + (1.0 - cfg.beta2) * g * g
                params[i] -= cfg.learning_rate * (mom[i] / bc1) / (np.sqrt(vel[i] / bc2) + 1e-8)

        err_tr = forward(net, X_tr) - y_tr
        err_val = forward(net, X_val) - y_val
        train_mse = float(err_tr @ err_tr) / n_tr * unit
        val_mse = float(err_val @ err_val) / n_val * unit
        if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
            raise TrainingDiverged(epoch)
        history.train_mse.append(train_mse)
        history.val_mse.append(val_mse)

        if val_mse < best_val:
            best_val = val_mse
            best_params = ([W.copy() for W in net.weights], [b.copy() for b in net.biases])
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break

    if best_params is not None:
        net.weights, net.biases = best_params
    if cfg.standardize_target:
        # fold the inverse transform into the output layer so forward()
        # returns log prices directly
        net.weights[-1] *= y_scale
        net.biases[-1] = net.biases[-1] * y_scale + y_shift
    return net, history


def gradient_check(
    net: Network,
    rows: np.ndarray,
    targets: np.ndarray,
    epsilon: float = 1e-5,
    n_sample: int = 200,
    seed: int = 0,
    corrupt_layer: int | None = None,
) -> float:
    """Max relative error between backprop and central finite differences.

    Samples >= n_sample parameters across all layers (all of them when the
    network is small). Denominator max(|g_a|, |g_n|, 1e-12).
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError("epsilon must be in [1e-7, 1e-3]")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    net = net.copy()
    _, gW, gb = loss_and_grads(net, rows, targets, corrupt_layer=corrupt_layer)
    analytic = gW + gb
    params = net.weights + net.biases

    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    flat_idx = (
        np.arange(total) if total <= n_sample else np.sort(rng.choice(total, n_sample, replace=False))
    )
    offsets = np.cumsum([0, *sizes])

    def loss_at() -> float:
        pred = forward(net, rows)
        err = pred - targets
        return float(err @ err) / rows.shape[0]

    worst = 0.0
    for fi in flat_idx:
        which = int(np.searchsorted(offsets, fi, side="right")) - 1
        local = np.unravel_index(fi - offsets[which], params[which].shape)
        orig = params[which][local]
        params[which][local] = orig + epsilon
        up = loss_at()
        params[which][local] = orig - epsilon
        down = loss_at()
        params[which][local] = orig
        g_num = (up - down) / (2.0 * epsilon)
        g_ana = analytic[which][local]
        rel = abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-12)
        worst = max(worst, rel)
    return worst
