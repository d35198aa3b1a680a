"""Module container with named parameters."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Parameter


class Module:
    training: bool = True

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        problems = []
        for name, p in own.items():
            if name not in state:
                if strict:
                    problems.append(f"{name}: missing")
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                problems.append(f"{name}: expected {p.data.shape}, got {arr.shape}")
        if strict:
            problems += [f"{name}: unexpected" for name in state if name not in own]
        if problems:
            raise ValueError("state dict mismatch:\n  " + "\n  ".join(problems))
        for name, p in own.items():
            if name in state:
                p.data = np.array(state[name], dtype=p.data.dtype, copy=True)

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def init_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> Parameter:
    return Parameter(rng.normal(0.0, std, size=shape).astype(dtype))


def init_zeros(shape, dtype=np.float32) -> Parameter:
    return Parameter(np.zeros(shape, dtype=dtype))


def init_ones(shape, dtype=np.float32) -> Parameter:
    return Parameter(np.ones(shape, dtype=dtype))
