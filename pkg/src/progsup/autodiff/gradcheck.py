"""Central finite-difference checks against tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numerical_grad(fn: Callable[[], Tensor], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        up = float(fn().data)
        arr[idx] = orig - h
        down = float(fn().data)
        arr[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Worst relative error between tape and finite-difference gradients.

    ``fn(*inputs)`` must return a scalar tensor.  Inputs are perturbed in place
    and restored.  Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``.
    Returns ``nan`` when an input or the function value is not finite.
    """
    for x in inputs:
        if not np.all(np.isfinite(x.data)):
            return float("nan")
        x.requires_grad = True
        x.grad = None
    with Tape() as tape:
        out = fn(*inputs)
    if not np.all(np.isfinite(out.data)):
        return float("nan")
    tape.backward(out)
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = numerical_grad(lambda: fn(*inputs), x.data, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        err = np.abs(analytic - numeric) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
