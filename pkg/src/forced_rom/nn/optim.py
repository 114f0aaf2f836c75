"""Adam/AdamW, plateau learning-rate scheduling and early stopping."""
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParam, NonFiniteGradient


class Adam:
    """Adam (``kind="adam"``, L2 folded into the gradient) or AdamW (decoupled decay).

    ``params`` are :class:`~forced_rom.nn.autodiff.Tensor` leaves updated in place.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0, kind="adam", clip_norm=None):
        if kind not in ("adam", "adamw"):
            raise InvalidParam(f"unknown optimizer kind {kind!r}")
        if lr <= 0 or not (0 < beta1 < 1) or not (0 < beta2 < 1) or eps <= 0 or weight_decay < 0:
            raise InvalidParam("invalid optimizer hyper-parameters")
        self.params = list(params)
        self.kind = kind
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads=None):
        if grads is None:
            grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise InvalidParam("one gradient per parameter is required")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("gradient contains NaN or inf")
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if total > self.clip_norm:
                grads = [g * (self.clip_norm / total) for g in grads]

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            theta = p.data
            if self.weight_decay:
                if self.kind == "adamw":
                    theta = theta - self.lr * self.weight_decay * theta
                else:
                    g = g + self.weight_decay * theta
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = theta - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after more than ``patience`` stale epochs."""

    patience: int = 10
    factor: float = 0.1
    min_improvement: float = 0.0
    min_lr: float = 0.0
    best_monitored: float = float("inf")
    epochs_since_improve: int = 0

    def __post_init__(self):
        if not (0 < self.factor < 1) or self.patience < 0 or self.min_improvement < 0:
            raise InvalidParam("invalid scheduler settings")

    def step(self, val_loss, lr):
        if val_loss < self.best_monitored - self.min_improvement:
            self.best_monitored = val_loss
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
        if self.epochs_since_improve > self.patience:
            lr = max(lr * self.factor, self.min_lr)
            self.epochs_since_improve = 0
        return lr


def scheduler_step(state, val_loss, current_lr):
    return state.step(val_loss, current_lr)


@dataclass
class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to beat ``best * (1 - tolerance)``."""

    tolerance: float = 1e-2
    patience: int = 20
    best_val: float = float("inf")
    epochs_since_improve: int = 0

    def step(self, val_loss):
        if val_loss < self.best_val - self.tolerance * abs(self.best_val) or self.best_val == float("inf"):
            self.best_val = val_loss
            self.epochs_since_improve = 0
            return "continue"
        self.epochs_since_improve += 1
        return "stop" if self.epochs_since_improve >= self.patience else "continue"


def early_stop_step(state, val_loss):
    return state.step(val_loss)
