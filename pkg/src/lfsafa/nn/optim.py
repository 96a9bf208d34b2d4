"""Adam with bias correction, plus the step-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: list[Tensor], grads: dict[Tensor, np.ndarray], state: AdamState, lr: float) -> AdamState:
    """One in-place Adam update of every trainable parameter that has a gradient.

    Parameters with ``requires_grad=False`` (frozen) are never modified, even
    if a gradient for them is passed in. Moments are keyed by position in
    ``params`` so the list order must be stable across calls.
    """
    names = [p.name or f"param[{i}]" for i, p in enumerate(params)]
    for p, name in zip(params, names):
        g = grads.get(p)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient of {name}", p.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(name, "non-finite gradient")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        g = grads.get(p)
        if g is None or not p.requires_grad:
            continue
        g = g.astype(p.dtype, copy=False)
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return state


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self, grads: dict[Tensor, np.ndarray], lr: float | None = None) -> None:
        adam_step(self.params, grads, self.state, self.lr if lr is None else lr)


def step_decay_lr(epoch: int, lr0: float = 1e-4, factor: float = 0.5, every: int = 50) -> float:
    """Learning rate for a 0-based epoch: lr0 * factor ** (epoch // every)."""
    return lr0 * factor ** (epoch // every)
