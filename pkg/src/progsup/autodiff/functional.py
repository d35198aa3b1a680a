"""Differentiable operators.

Every op computes its forward value with numpy and registers a closure that
maps the upstream gradient to one gradient per input.  Broadcasting follows
numpy; gradients are summed back to each input's shape.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .tensor import Tensor, as_tensor, make_result

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return make_result(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    ad = a.data
    return make_result(ad ** exponent, (a,), lambda g: (g * exponent * ad ** (exponent - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result(a.data * mask, (a,), lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    """Exact GeLU, ``x * Phi(x)``."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _SQRT_HALF))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return make_result(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),))


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching rules.

    For 2-D operands the inner dimensions must agree exactly.
    """
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {ad.shape} x {bd.shape}")
    out = ad @ bd

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return make_result(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; weight is ``[d_in, d_out]``."""
    xd, wd = x.data, weight.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeError(f"linear dimension mismatch: {xd.shape} x {wd.shape}")
    out = xd @ wd
    if bias is not None:
        out = out + bias.data

    def bw(g):
        gx = g @ wd.T
        g2 = g.reshape(-1, g.shape[-1])
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, parents, bw)


# ---------------------------------------------------------------- reductions / shape


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_result(np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in items)


def getitem(a: Tensor, index) -> Tensor:
    shape, dtype = a.shape, a.dtype
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_result(a.data[index], (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(np.stack([t.data for t in tensors], axis=axis), tensors, bw)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)
    shape, dtype = table.shape, table.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (full,)

    return make_result(table.data[ids], (table,), bw)


# ---------------------------------------------------------------- normalisation


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-stabilised softmax.

    ``mask`` (broadcastable, 1 = keep) gives masked entries exactly zero
    weight; a slice with nothing kept comes out all zero.
    """
    z = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(keep, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.exp(z - zmax)
    s = e.sum(axis=axis, keepdims=True)
    out = e / np.where(s > 0, s, 1.0)
    out = out.astype(x.dtype, copy=False)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data
    d = xd.shape[-1]

    def bw(g):
        gh = g * gd
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        flat_g = g.reshape(-1, d)
        ggain = (flat_g * xhat.reshape(-1, d)).sum(axis=0)
        gbias = flat_g.sum(axis=0)
        return gx, ggain, gbias

    return make_result(out, (x, gain, bias), bw)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------- recurrent


def gru_cell(x: Tensor, h_prev: Tensor, w_ih: Tensor, w_hh: Tensor,
             b_ih: Tensor, b_hh: Tensor) -> Tensor:
    """One GRU step over the last axis.

    Weights are stacked gate-major ``[r | z | n]``: ``w_ih`` is
    ``[d_in, 3*d_h]``, ``w_hh`` is ``[d_h, 3*d_h]``.  The reset gate multiplies
    the previous state before its projection into the candidate::

        r = sigmoid(x W_r + b_r + h U_r + c_r)
        z = sigmoid(x W_z + b_z + h U_z + c_z)
        n = tanh(x W_n + b_n + (r * h) U_n + c_n)
        h' = (1 - z) * h + z * n
    """
    d_h = h_prev.shape[-1]
    if w_hh.shape != (d_h, 3 * d_h) or w_ih.shape[-1] != 3 * d_h or x.shape[-1] != w_ih.shape[0]:
        raise ShapeError(
            f"gru_cell shapes inconsistent: x {x.shape}, h {h_prev.shape}, "
            f"w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    gx = linear(x, w_ih, b_ih)
    gates_x = [gx[..., k * d_h:(k + 1) * d_h] for k in range(3)]
    u_rz = w_hh[:, :2 * d_h]
    c_rz = b_hh[:2 * d_h]
    gh = linear(h_prev, u_rz, c_rz)
    r = sigmoid(gates_x[0] + gh[..., :d_h])
    z = sigmoid(gates_x[1] + gh[..., d_h:])
    n = tanh(gates_x[2] + linear(r * h_prev, w_hh[:, 2 * d_h:], b_hh[2 * d_h:]))
    return (1.0 - z) * h_prev + z * n


# ---------------------------------------------------------------- losses


def cross_entropy(logits: Tensor, target, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over the leading axes.

    ``logits`` is ``[..., n_cls]``; ``target`` holds integer classes with the
    leading shape; ``mask`` selects which positions count.
    """
    z = logits.data
    n_cls = z.shape[-1]
    t = np.asarray(target, dtype=np.int64)
    if t.shape != z.shape[:-1]:
        t = t.reshape(z.shape[:-1])
    w = np.ones(t.shape, dtype=z.dtype) if mask is None else np.asarray(mask, dtype=z.dtype)
    valid = w > 0
    if np.any((t[valid] < 0) | (t[valid] >= n_cls)):
        raise ValueError(f"cross_entropy target out of range [0, {n_cls})")
    t = np.where(valid, t, 0)
    count = max(float(w.sum()), 1.0)
    zs = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=-1))
    picked = np.take_along_axis(zs, t[..., None], axis=-1)[..., 0]
    loss = ((lse - picked) * w).sum() / count
    p = np.exp(zs - lse[..., None])

    def bw(g):
        grad = p.copy()
        np.put_along_axis(grad, t[..., None], np.take_along_axis(grad, t[..., None], -1) - 1.0, -1)
        return (grad * (w / count)[..., None] * g,)

    return make_result(np.asarray(loss, dtype=z.dtype), (logits,), bw)


def binary_cross_entropy(score: Tensor, target, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean BCE between logits ``score`` and targets in [0, 1].

    Uses ``max(s, 0) - s*t + log(1 + exp(-|s|))``.  With an all-zero mask the
    loss is 0.
    """
    s = score.data
    t = np.broadcast_to(np.asarray(target, dtype=s.dtype), s.shape)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("binary_cross_entropy targets must lie in [0, 1]")
    w = np.ones(s.shape, dtype=s.dtype) if mask is None else \
        np.broadcast_to(np.asarray(mask, dtype=s.dtype), s.shape)
    count = float(w.sum())
    denom = count if count > 0 else 1.0
    per = np.maximum(s, 0) - s * t + np.log1p(np.exp(-np.abs(s)))
    loss = (per * w).sum() / denom
    sig = _sigmoid(s)

    def bw(g):
        return ((sig - t) * w / denom * g,)

    return make_result(np.asarray(loss, dtype=s.dtype), (score,), bw)


def mse(pred: Tensor, target) -> Tensor:
    diff = sub(pred, as_tensor(target, like=pred))
    return mean(mul(diff, diff))
