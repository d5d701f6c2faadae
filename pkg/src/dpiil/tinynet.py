"""Minimal feed-forward network stack on numpy.

Fixed topology (tanh hidden layers, linear output) with hand-derived
reverse-mode gradients, an Adam-style optimizer, and two losses: mean squared
error for action regression and Gaussian negative log-likelihood for the
heteroscedastic speed model. Inputs are standardized with training-set
statistics stored on the network; targets stay in raw units.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FitConfig",
    "LOG_VAR_MAX",
    "LOG_VAR_MIN",
    "Mlp",
    "TrainingDivergedError",
    "forward",
    "gaussian_nll",
    "init_mlp",
    "load_mlp",
    "loss_and_grads",
    "mse_loss",
    "save_mlp",
    "train",
]

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 4.0

_CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class Mlp:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_mean: np.ndarray
    x_std: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(
            sizes=self.sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            x_mean=self.x_mean.copy(),
            x_std=self.x_std.copy(),
        )


@dataclass(frozen=True)
class FitConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Floor on total optimizer steps so tiny datasets (few batches per
    # epoch) still train to convergence; inactive for n >= 248 at batch 64.
    min_steps: int = 800


def init_mlp(sizes: tuple[int, ...], seed: int) -> Mlp:
    if len(sizes) < 2:
        raise ValueError("need at least input and output layer sizes")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return Mlp(
        sizes=tuple(sizes),
        weights=ws,
        biases=bs,
        x_mean=np.zeros(sizes[0]),
        x_std=np.ones(sizes[0]),
    )


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; x must be (n, in_dim) raw (unnormalized)."""
    h = (x - net.x_mean) / net.x_std
    acts = [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == last else np.tanh(z))
    return acts


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; accepts (in_dim,) or (n, in_dim)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != net input {net.in_dim}")
    out = _forward_cached(net, x)[-1]
    return out[0] if single else out


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared L2 error summed over dims, averaged over the batch.

    Returns the loss and its gradient with respect to `pred`.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ValueError("pred and target shapes differ")
    diff = pred - target
    n = pred.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return loss, 2.0 * diff / n


def gaussian_nll(
    v: np.ndarray | float, mu: np.ndarray | float, log_var: np.ndarray | float
) -> tuple[np.ndarray | float, np.ndarray | float, np.ndarray | float]:
    """Elementwise negative log-likelihood of v under N(mu, exp(log_var)).

    Returns (nll, d/dmu, d/dlog_var). Callers are expected to keep log_var
    inside [LOG_VAR_MIN, LOG_VAR_MAX]; training clamps the variance head.
    """
    v = np.asarray(v, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.asarray(log_var, dtype=np.float64)
    inv_var = np.exp(-lv)
    resid = v - mu
    nll = 0.5 * (math.log(2.0 * math.pi) + lv + resid * resid * inv_var)
    dmu = -resid * inv_var
    dlv = 0.5 * (1.0 - resid * resid * inv_var)
    if nll.ndim == 0:
        return float(nll), float(dmu), float(dlv)
    return nll, dmu, dlv


def _loss_and_dout(
    out: np.ndarray, y: np.ndarray, loss: str
) -> tuple[float, np.ndarray]:
    if loss == "mse":
        return mse_loss(out, y)
    if loss == "nll":
        d = y.shape[1]
        if out.shape[1] != 2 * d:
            raise ValueError("nll needs net output dim = 2 x target dim")
        mu = out[:, :d]
        raw_lv = out[:, d:]
        lv = np.clip(raw_lv, LOG_VAR_MIN, LOG_VAR_MAX)
        nll, dmu, dlv = gaussian_nll(y, mu, lv)
        n = y.shape[0]
        dout = np.empty_like(out)
        dout[:, :d] = dmu / n
        dout[:, d:] = np.where(
            (raw_lv > LOG_VAR_MIN) & (raw_lv < LOG_VAR_MAX), dlv / n, 0.0
        )
        return float(np.sum(nll) / n), dout
    raise ValueError(f"unknown loss {loss!r}")


def loss_and_grads(
    net: Mlp, x: np.ndarray, y: np.ndarray, loss: str = "mse"
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Batch loss plus analytic gradients for every weight and bias."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    acts = _forward_cached(net, x)
    value, delta = _loss_and_dout(acts[-1], y, loss)
    gw = [np.empty(0)] * len(net.weights)
    gb = [np.empty(0)] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (1.0 - acts[i] * acts[i])
    return value, gw, gb


def train(
    net: Mlp,
    x: np.ndarray,
    y: np.ndarray,
    loss: str = "mse",
    fit: FitConfig = FitConfig(),
    seed: int = 0,
) -> Mlp:
    """Mini-batch Adam on a copy of `net`; returns the trained copy.

    Standardization statistics are always refreshed from the training inputs.
    Deterministic given (data, seed, fit).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if fit.epochs < 1:
        raise ValueError("epochs must be >= 1")
    net = net.copy()
    net.x_mean = x.mean(axis=0)
    net.x_std = np.maximum(x.std(axis=0), 1e-8)

    rng = np.random.default_rng(seed)
    mw = [np.zeros_like(w) for w in net.weights]
    vw = [np.zeros_like(w) for w in net.weights]
    mb = [np.zeros_like(b) for b in net.biases]
    vb = [np.zeros_like(b) for b in net.biases]
    steps_per_epoch = (n + fit.batch_size - 1) // fit.batch_size
    epochs = max(fit.epochs, -(-fit.min_steps // steps_per_epoch))
    t = 0
    first_epoch_loss = None
    epoch_loss = 0.0
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, fit.batch_size):
            idx = perm[lo : lo + fit.batch_size]
            value, gw, gb = loss_and_grads(net, x[idx], y[idx], loss)
            total += value * len(idx)
            t += 1
            c1 = 1.0 - fit.beta1**t
            c2 = 1.0 - fit.beta2**t
            for params, grads, ms, vs in (
                (net.weights, gw, mw, vw),
                (net.biases, gb, mb, vb),
            ):
                for p, g, m, v in zip(params, grads, ms, vs):
                    m *= fit.beta1
                    m += (1.0 - fit.beta1) * g
                    v *= fit.beta2
                    v += (1.0 - fit.beta2) * (g * g)
                    p -= fit.lr * (m / c1) / (np.sqrt(v / c2) + fit.eps)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(f"training diverged at epoch {epoch}")
        if first_epoch_loss is None:
            first_epoch_loss = epoch_loss
    if first_epoch_loss is not None and epoch_loss > first_epoch_loss:
        warnings.warn(
            f"final epoch loss {epoch_loss:.4g} above initial "
            f"{first_epoch_loss:.4g}",
            stacklevel=2,
        )
    return net


def save_mlp(net: Mlp, path) -> None:
    arrays = {
        "schema_version": np.array([_CHECKPOINT_VERSION]),
        "sizes": np.array(net.sizes, dtype=np.int64),
        "x_mean": net.x_mean,
        "x_std": net.x_std,
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_mlp(path) -> Mlp:
    with np.load(path) as data:
        version = int(data["schema_version"][0])
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = tuple(int(s) for s in data["sizes"])
        ws = [data[f"w{i}"] for i in range(len(sizes) - 1)]
        bs = [data[f"b{i}"] for i in range(len(sizes) - 1)]
        return Mlp(
            sizes=sizes,
            weights=ws,
            biases=bs,
            x_mean=data["x_mean"],
            x_std=data["x_std"],
        )
