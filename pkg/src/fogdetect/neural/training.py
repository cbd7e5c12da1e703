"""Mini-batch Adam training with a stratified validation split and early stopping."""

from __future__ import annotations

import copy
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import seeding
from ..errors import ConfigurationError, ContractError
from .layers import Layer, Sequential, Sigmoid
from .losses import bce_loss, bce_sigmoid_logit_grad
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 6e-4
    batch_size: int = 512
    max_epochs: int = 150
    patience: int = 7
    val_fraction: float = 0.2
    seed: int = 0
    dtype: str = "float32"

    def validate(self):
        if not (self.learning_rate >= 0 and self.batch_size > 0 and self.max_epochs > 0
                and self.patience > 0):
            raise ConfigurationError("training hyperparameters must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in (0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError("dtype must be float64 or float32")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainedModel:
    model: Layer
    history: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    config: TrainConfig | None = None
    train_index: np.ndarray | None = None  # rows used for gradient steps
    val_index: np.ndarray | None = None  # rows monitored for early stopping


def parameters(model: Layer) -> dict:
    return {name: layer.params[key] for name, layer, key in model.named_parameters()}


def gradients(model: Layer) -> dict:
    return {name: layer.grads[key] for name, layer, key in model.named_parameters()}


def cast_parameters(model: Layer, dtype) -> None:
    for _, layer, key in model.named_parameters():
        layer.params[key] = layer.params[key].astype(dtype, copy=False)


def stratified_split(y: np.ndarray, val_fraction: float, rng: np.random.Generator):
    """Indices (train, val) with each class split at ``val_fraction``."""
    train, val = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(val_fraction * len(idx)))
        if len(idx) >= 2:
            n_val = min(max(n_val, 1), len(idx) - 1)
        else:
            n_val = 0
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def predict_proba(model: Layer, x, batch_size: int = 1024, dtype=None) -> np.ndarray:
    """Inference-mode scores, one per row of ``x``."""
    x = np.asarray(x)
    if dtype is not None:
        x = x.astype(dtype, copy=False)
    out = [model.forward(x[i:i + batch_size], training=False, record=False)
           for i in range(0, len(x), batch_size)]
    if not out:
        return np.empty(0)
    return np.concatenate(out).reshape(len(x), -1)[:, 0].astype(np.float64)


def _train_step(model: Layer, xb, yb, rng) -> float:
    p = model.forward(xb, training=True, rng=rng).reshape(-1)
    loss, _ = bce_loss(p, yb)
    if isinstance(model, Sequential) and isinstance(model.layers[-1], Sigmoid):
        g = bce_sigmoid_logit_grad(p, yb).reshape(-1, 1)
        for layer in reversed(model.layers[:-1]):
            g = layer.backward(g)
            if g is None:
                break
    else:
        _, g = bce_loss(p, yb)
        model.backward(g.reshape(-1, 1).astype(xb.dtype))
    return loss


def fit(model: Layer, x, y, cfg: TrainConfig, monitor=None) -> TrainedModel:
    """Train ``model`` in place and restore its best-validation-loss weights.

    ``monitor(epoch, val_loss) -> val_loss`` may replace the monitored value
    (used to exercise the stopping rule).
    """
    cfg.validate()
    y = np.asarray(y).astype(np.int64).reshape(-1)
    x = np.asarray(x)
    if len(x) == 0 or len(x) != len(y):
        raise ContractError("training set must be non-empty with one label per row")
    if not np.isin(y, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        warnings.warn("training set contains a single class", RuntimeWarning)

    dtype = np.dtype(cfg.dtype)
    cast_parameters(model, dtype)
    x = x.astype(dtype, copy=False)
    yf = y.astype(dtype)
    split_rng = seeding.rng(cfg.seed, "split")
    shuffle_rng = seeding.rng(cfg.seed, "shuffle")
    dropout_rng = seeding.rng(cfg.seed, "dropout")
    tr, va = stratified_split(y, cfg.val_fraction, split_rng)
    if len(va) == 0:
        va = tr

    params = parameters(model)
    state = AdamState()
    best = np.inf
    best_params = copy.deepcopy(params)
    best_epoch, wait, history = 0, 0, []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = tr[shuffle_rng.permutation(len(tr))]
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            b = order[i:i + cfg.batch_size]
            losses.append(_train_step(model, x[b], yf[b], dropout_rng) * len(b))
            adam_step(params, gradients(model), state, cfg.learning_rate)
        train_loss = float(np.sum(losses) / len(order))
        val_loss, _ = bce_loss(predict_proba(model, x[va]), y[va])
        if monitor is not None:
            val_loss = monitor(epoch, val_loss)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": float(val_loss)})
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if val_loss < best:
            best, best_epoch, wait = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    for k, v in params.items():
        v[...] = best_params[k]
    return TrainedModel(model, history, best_epoch, epoch, cfg, tr, va)
