"""RMSprop with decoupled weight decay, and the step-halving learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-4
    rho: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    sq_avg: dict = field(default_factory=dict)


def rmsprop_step(params, grads, state):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    ``v <- rho v + (1 - rho) g^2`` then
    ``p <- p - lr g / (sqrt(v) + eps) - lr weight_decay p``.
    Parameters missing from ``grads`` are only decayed.
    """
    lr, rho, eps, wd = state.lr, state.rho, state.eps, state.weight_decay
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        v = state.sq_avg.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = rho * v + (1 - rho) * g * g
        state.sq_avg[name] = v.astype(p.dtype, copy=False)
        update = lr * g / (np.sqrt(v) + eps)
        if wd:
            update = update + lr * wd * p.data
        p.data = (p.data - update).astype(p.dtype, copy=False)
    state.step += 1
    return params


def halving_lr(base_lr, iterations, step, parts=3):
    """Learning rate halved after every ``1/parts`` of ``iterations``."""
    period = max(1, -(-iterations // parts))
    return base_lr * 0.5 ** (step // period)
