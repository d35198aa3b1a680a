"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, beta1, beta2, eps)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None],
              state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update of ``params``.

    ``None`` gradients are treated as zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.for_params([p.data for p in self.params], betas[0], betas[1], eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params],
                  self.state, self.lr if lr is None else lr)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out
