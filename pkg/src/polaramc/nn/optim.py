"""Adadelta (Zeiler 2012): no learning rate, running averages of squared
gradients and squared updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdadeltaState:
    sq_grad: np.ndarray
    sq_delta: np.ndarray

    @classmethod
    def zeros_like(cls, p: np.ndarray) -> "AdadeltaState":
        return cls(np.zeros_like(p, dtype=float), np.zeros_like(p, dtype=float))


def adadelta_step(state: AdadeltaState, grad: np.ndarray, rho: float = 0.95, eps: float = 1e-6):
    """One elementwise update; returns ``(delta, new_state)``.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    delta  = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) delta^2
    """
    sq_grad = rho * state.sq_grad + (1 - rho) * grad * grad
    delta = -np.sqrt(state.sq_delta + eps) / np.sqrt(sq_grad + eps) * grad
    sq_delta = rho * state.sq_delta + (1 - rho) * delta * delta
    return delta, AdadeltaState(sq_grad, sq_delta)


@dataclass
class Adadelta:
    rho: float = 0.95
    eps: float = 1e-6
    state: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place from ``grads`` (matching names)."""
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            st = self.state.get(name)
            if st is None:
                st = AdadeltaState.zeros_like(p)
            delta, self.state[name] = adadelta_step(st, g, self.rho, self.eps)
            p += delta
