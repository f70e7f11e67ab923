"""Mini-batch training loop: Adam on mean-squared error with gradient-norm
clipping and early stopping on a chronological validation tail.

A fresh tape is opened per batch and dropped after its backward pass, so
in-place parameter updates by the optimizer never touch live tape state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ComputationTape, Tensor
from .errors import ContractError, TrainingDivergedError
from .networks import ModelConfig, forward


@dataclass
class TrainConfig:
    """Optimization settings; everything that affects a fit lives here."""

    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    early_stop_patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    gradient_clip_norm: float = 1.0

    def __post_init__(self):
        if min(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_eps) <= 0:
            raise ContractError("learning rate, betas, and eps must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ContractError("batch_size and max_epochs must be >= 1")
        if not 0 < self.early_stop_patience <= self.max_epochs:
            raise ContractError("early_stop_patience must be in [1, max_epochs]")
        if not 0.0 <= self.val_fraction < 0.5:
            raise ContractError(f"val_fraction must be in [0, 0.5), got {self.val_fraction}")
        if self.gradient_clip_norm <= 0:
            raise ContractError("gradient_clip_norm must be positive")


class Adam:
    """Standard Adam with bias correction, updating parameters in place."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self._m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        c = self.cfg
        self.step_count += 1
        correction1 = 1.0 - c.adam_beta1 ** self.step_count
        correction2 = 1.0 - c.adam_beta2 ** self.step_count
        for name in sorted(self.params):
            tensor = self.params[name]
            grad = tensor.grad
            if grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= c.adam_beta1
            m += (1.0 - c.adam_beta1) * grad
            v *= c.adam_beta2
            v += (1.0 - c.adam_beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + c.adam_eps)
            tensor.data -= c.learning_rate * update


def global_gradient_norm(params: dict) -> float:
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most ``max_norm``."""
    norm = global_gradient_norm(params)
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad = t.grad * factor
    return norm


@dataclass
class TrainHistory:
    """Per-epoch loss curve and where early stopping landed."""

    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _batch_mse(cfg: ModelConfig, params: dict, X: np.ndarray, y: np.ndarray) -> float:
    pred = forward(cfg, params, Tensor(X), train=False)
    diff = pred.data - y
    return float((diff * diff).mean())


def train_model(
    cfg: ModelConfig,
    params: dict,
    inputs: np.ndarray,
    targets: np.ndarray,
    tcfg: TrainConfig,
) -> TrainHistory:
    """Fit ``params`` in place; returns the loss history.

    The last ``val_fraction`` of the rows (chronologically) form the
    validation split driving early stopping; parameters are restored to the
    best-validation epoch before returning.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise ContractError("training needs at least one sample")
    if inputs.shape[1] != cfg.window or targets.shape[1] != cfg.horizon:
        raise ContractError(
            f"data shaped {inputs.shape}/{targets.shape} does not match "
            f"window={cfg.window}, horizon={cfg.horizon}"
        )

    n_val = int(n * tcfg.val_fraction)
    if tcfg.val_fraction > 0 and n >= 10:
        n_val = max(n_val, 1)
    else:
        n_val = 0
    train_x, train_y = inputs[: n - n_val], targets[: n - n_val]
    val_x, val_y = inputs[n - n_val :], targets[n - n_val :]

    shuffle_rng, dropout_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(tcfg.seed).spawn(2)
    ]
    optimizer = Adam(params, tcfg)
    history = TrainHistory()
    best_val = np.inf
    best_snapshot = None
    bad_epochs = 0
    n_train = train_x.shape[0]

    for epoch in range(tcfg.max_epochs):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, tcfg.batch_size):
            batch = order[start : start + tcfg.batch_size]
            with ComputationTape() as tape:
                pred = forward(cfg, params, Tensor(train_x[batch]), train=True, rng=dropout_rng)
                diff = ad.sub(pred, Tensor(train_y[batch]))
                loss = ad.tmean(ad.mul(diff, diff))
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                norms = {k: float(np.abs(t.data).max()) for k, t in params.items()}
                worst = max(norms, key=norms.get)
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // tcfg.batch_size}: "
                    f"loss={loss_value}, largest parameter {worst}={norms[worst]:.3e}"
                )
            for t in params.values():
                t.zero_grad()
            tape.backward(loss)
            clip_gradients(params, tcfg.gradient_clip_norm)
            optimizer.step()
            epoch_loss += loss_value * len(batch)
        history.train_mse.append(epoch_loss / n_train)

        if n_val > 0:
            val_mse = _batch_mse(cfg, params, val_x, val_y)
        else:
            val_mse = history.train_mse[-1]
        history.val_mse.append(val_mse)

        if val_mse < best_val:
            best_val = val_mse
            history.best_epoch = epoch
            best_snapshot = {k: t.data.copy() for k, t in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= tcfg.early_stop_patience:
                history.stopped_early = True
                break

    if best_snapshot is not None:
        for name, tensor in params.items():
            tensor.data = best_snapshot[name]
    return history
