"""Adam optimizer, functional core plus a thin stateful wrapper."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError, TrainingDivergedError
from .tensor import Tensor


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_opt: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"grad shape {g.shape} != param shape {p.shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps_opt)
    return state


class Adam:
    """Adam over named parameter Tensors; missing grads count as zero."""

    def __init__(self, params: dict[str, Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        raw = {k: t.data for k, t in self.params.items()}
        grads = {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self.params.items()
        }
        adam_step(raw, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
