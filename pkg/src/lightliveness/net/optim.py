"""RMSprop with the classic square-accumulator update."""

from __future__ import annotations

import numpy as np


def init_state(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict[str, np.ndarray],
    learning_rate: float,
    decay: float = 0.9,
    epsilon: float = 1e-8,
) -> None:
    """In-place update: acc <- decay*acc + (1-decay)*g^2;
    p <- p - lr * g / sqrt(acc + eps)."""
    if set(params) != set(state):
        raise ValueError("optimizer state does not match parameters")
    for name, p in params.items():
        g = grads[name]
        acc = state[name]
        acc *= decay
        acc += (1.0 - decay) * np.square(g)
        p -= learning_rate * g / np.sqrt(acc + epsilon)
