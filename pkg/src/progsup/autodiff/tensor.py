"""Tensor and tape: the reverse-mode core.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient.  Outside a tape nothing is recorded, so
inference code simply runs without one.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

_state = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; implementations live in functional
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float):
        from . import functional as F
        return F.power(self, exponent)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index):
        from . import functional as F
        return F.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)


def _raise_item(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


class Parameter(Tensor):
    """A leaf tensor that always requires a gradient."""

    __slots__ = ()

    def __init__(self, data, dtype=None, name: str | None = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: tuple, backward: BackwardFn):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Ops are appended in execution order, so the list is topologically sorted
    by construction.  ``backward`` walks it once in reverse.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, parents: tuple, backward: BackwardFn) -> None:
        self.nodes.append(_Node(out, parents, backward))
        self._produced.add(id(out))

    def backward(self, root: Tensor) -> None:
        """Populate ``.grad`` on every grad-requiring tensor reachable from ``root``.

        Gradients accumulate into existing ``.grad`` buffers; call
        ``zero_grad`` on parameters between steps.
        """
        if root.data.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
        if id(root) not in self._produced:
            raise ValueError("root tensor was not produced on this tape")
        pending: dict[int, list] = {id(root): [root, np.ones_like(root.data)]}
        for node in reversed(self.nodes):
            entry = pending.pop(id(node.out), None)
            if entry is None:
                continue
            out, g = entry
            _accumulate(out, g)
            grads = node.backward(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not isinstance(parent, Tensor) or not parent.requires_grad:
                    continue
                slot = pending.get(id(parent))
                if slot is None:
                    pending[id(parent)] = [parent, pg]
                else:
                    slot[1] = slot[1] + pg
        # whatever is left was never produced by a node: leaves
        for leaf, g in pending.values():
            _accumulate(leaf, g)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.data.dtype)
    if g.shape != t.data.shape:
        g = np.broadcast_to(g, t.data.shape)
    if t.grad is None:
        # intermediates may share the upstream buffer; nothing writes grads in place
        t.grad = np.array(g, copy=True) if isinstance(t, Parameter) or not g.flags.writeable else g
    else:
        t.grad = t.grad + g


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def current_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(tape: Tape, root: Tensor) -> None:
    tape.backward(root)


def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def make_result(data: np.ndarray, parents: tuple, backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as an op output, recording it when gradients are needed."""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward_fn)
    return out
