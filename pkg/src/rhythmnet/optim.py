"""Adam optimizer and the plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, NonFiniteGradientError

IMPROVEMENT_TOL = 1e-6


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the schedule's learning rate.

    Moment arrays mirror the parameters' shapes and dtypes exactly.
    """

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict[str, np.ndarray], names: list[str],
              lr: float = 0.001) -> AdamState:
    return AdamState(
        m={n: np.zeros_like(params[n]) for n in names},
        v={n: np.zeros_like(params[n]) for n in names},
        lr=lr,
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, in place on params and state."""
    if state.lr <= 0:
        raise ContractViolationError("learning rate must be > 0")
    for name in state.m:
        g = grads[name]
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(name)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name in state.m:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ContractViolationError(
                f"gradient shape {g.shape} != parameter shape "
                f"{params[name].shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


class PlateauScheduler:
    """Divide the learning rate by `factor` after `patience` consecutive
    epochs without a strict validation-loss improvement (tolerance 1e-6);
    never drops below `min_lr`."""

    def __init__(self, patience: int = 3, factor: float = 10.0,
                 min_lr: float = 1e-6):
        if patience < 1:
            raise ContractViolationError("patience must be >= 1")
        if factor <= 1:
            raise ContractViolationError("factor must be > 1")
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = float("inf")
        self.bad_epochs = 0

    def update(self, val_loss: float, lr: float) -> float:
        """Feed one epoch's validation loss; returns the lr to use next."""
        if val_loss < self.best - IMPROVEMENT_TOL:
            self.best = val_loss
            self.bad_epochs = 0
            return lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            return max(lr / self.factor, self.min_lr)
        return lr
