"""AdamW with decoupled weight decay and an epoch-level cosine schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamWState", "adamw_step", "cosine_lr"]

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float,
) -> None:
    """Update ``params`` in place.

    ``p -= lr * wd * p`` first, then the bias-corrected Adam step
    ``p -= lr * m_hat / (sqrt(v_hat) + eps)``.
    """
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - BETA1**t, 1.0 - BETA2**t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + EPS)


def cosine_lr(epoch: int, lr: float, max_epochs: int, warmup_epochs: int = 0, warmup_start_lr: float = 0.0) -> float:
    """Linear warmup from ``warmup_start_lr`` to ``lr``, then ``lr * (1 + cos(pi t / T)) / 2``."""
    if not 0 <= epoch < max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {max_epochs})")
    if epoch < warmup_epochs:
        return warmup_start_lr + (lr - warmup_start_lr) * epoch / warmup_epochs
    t, span = epoch - warmup_epochs, max_epochs - warmup_epochs
    return max(lr * (1.0 + math.cos(math.pi * t / span)) / 2.0, 0.0)
