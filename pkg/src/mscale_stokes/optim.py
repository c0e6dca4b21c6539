"""Adam, the staircase learning-rate schedule, and the Poisson-weight controller."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["AdamState", "adam_step", "LRSchedule", "lr_at", "AlphaAdapter", "adapt_alpha"]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    """One bias-corrected Adam update, applied to ``params`` and ``state`` in place."""
    if not (params.shape == grads.shape == state.m.shape):
        raise UsageError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    b1, b2 = state.beta1, state.beta2
    state.t += 1
    state.m *= b1
    state.m += (1 - b1) * grads
    state.v *= b2
    state.v += (1 - b2) * grads * grads
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float = 1e-3
    drop_every: int = 100
    drop_factor: float = 0.1

    def lr_at(self, epoch: int) -> float:
        """Learning rate for the 0-based ``epoch``."""
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        return self.base_lr * self.drop_factor ** (epoch // self.drop_every)


def lr_at(schedule: LRSchedule, epoch: int) -> float:
    return schedule.lr_at(epoch)


@dataclass
class AlphaAdapter:
    """Moves the Poisson weight toward balancing the velocity and pressure errors.

    At a check epoch: ``alpha += step`` when ``err_u > 2 err_p``; ``alpha -= step``
    when ``err_p > 2 err_u`` and ``alpha > floor``.
    """

    alpha: float = 2000.0
    step_size: float = 500.0
    floor: float = 500.0
    check_every: int = 50

    def is_check_epoch(self, epoch: int) -> bool:
        return epoch > 0 and epoch % self.check_every == 0

    def adapt(self, err_u: float, err_p: float) -> float:
        if err_u > 2 * err_p:
            self.alpha += self.step_size
        elif err_p > 2 * err_u and self.alpha > self.floor:
            self.alpha -= self.step_size
        return self.alpha


def adapt_alpha(adapter: AlphaAdapter, err_u: float, err_p: float) -> float:
    return adapter.adapt(err_u, err_p)
