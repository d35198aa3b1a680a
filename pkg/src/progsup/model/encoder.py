"""Two-stream vision-language encoder with a cross-modal stack.

All tensors are batched: tokens ``[B, T]``, object features ``[B, N, F]``,
boxes ``[B, N, 7]``, boolean masks ``[B, T]`` / ``[B, N]`` (True = real).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..autodiff import Module, Tensor, init_normal, init_ones, init_zeros
from ..autodiff import functional as F

PAD, UNK, CLS = "<pad>", "<unk>", "<cls>"


@dataclass(frozen=True)
class ModelConfig:
    d_hidden: int = 64
    n_heads: int = 4
    L_lang: int = 4
    L_vis: int = 2
    L_x: int = 2
    max_tokens: int = 24
    max_objects: int = 16
    answer_vocab_size: int = 24
    tap: str = "crossmodal"
    ffn_ratio: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_hidden % self.n_heads:
            raise ValueError(f"d_hidden {self.d_hidden} not divisible by n_heads {self.n_heads}")
        if self.tap not in ("unimodal", "crossmodal"):
            raise ValueError(f"tap must be 'unimodal' or 'crossmodal', got {self.tap!r}")
        for name in ("d_hidden", "n_heads", "max_tokens", "max_objects", "answer_vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def paper_scale(cls, **kw) -> "ModelConfig":
        return cls(d_hidden=128, n_heads=4, L_lang=9, L_vis=5, L_x=5, ffn_ratio=4, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


class TokenVocab:
    """Word to row index, with reserved rows for padding, unknown words and CLS."""

    def __init__(self, words: Sequence[str]):
        self.words = [PAD, UNK, CLS] + [w for w in words if w not in (PAD, UNK, CLS)]
        self._index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Ids with CLS prepended; unknown words map to the UNK row."""
        unk = self._index[UNK]
        return np.array([self._index[CLS]] + [self._index.get(t, unk) for t in tokens], dtype=np.int64)


# ---------------------------------------------------------------- layers


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        self.weight = init_normal(rng, (d_in, d_out), dtype=dtype)
        self.bias = init_zeros((d_out,), dtype=dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32):
        self.gain = init_ones((d,), dtype=dtype)
        self.bias = init_zeros((d,), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    """Scaled dot-product attention; masked keys get exactly zero weight."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        self.n_heads = n_heads
        self.q = Linear(d, d, rng, dtype)
        self.k = Linear(d, d, rng, dtype)
        self.v = Linear(d, d, rng, dtype)
        self.o = Linear(d, d, rng, dtype)
        self.last_weights: Optional[np.ndarray] = None

    def _heads(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        return x.reshape(b, n, self.n_heads, d // self.n_heads).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, ctx: Tensor, ctx_mask: np.ndarray) -> Tensor:
        b, t, d = x.shape
        if ctx_mask.shape != ctx.shape[:2]:
            raise F.ShapeError(f"attention mask {ctx_mask.shape} does not match context {ctx.shape[:2]}")
        q, k, v = self._heads(self.q(x)), self._heads(self.k(ctx)), self._heads(self.v(ctx))
        scores = F.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(d // self.n_heads))
        w = F.softmax(scores, axis=-1, mask=ctx_mask[:, None, None, :])
        self.last_weights = w.data
        out = F.matmul(w, v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.o(out)


class FeedForward(Module):
    def __init__(self, d: int, ratio: int, rng: np.random.Generator, dtype=np.float32):
        self.up = Linear(d, ratio * d, rng, dtype)
        self.down = Linear(ratio * d, d, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(F.gelu(self.up(x)))


class SelfBlock(Module):
    """Self-attention then feed-forward, each wrapped in residual + layer norm."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.attn = MultiHeadAttention(cfg.d_hidden, cfg.n_heads, rng, dtype)
        self.ln1 = LayerNorm(cfg.d_hidden, dtype)
        self.ffn = FeedForward(cfg.d_hidden, cfg.ffn_ratio, rng, dtype)
        self.ln2 = LayerNorm(cfg.d_hidden, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        x = self.ln1(x + self.attn(x, x, mask))
        return self.ln2(x + self.ffn(x))


class CrossBlock(Module):
    """Bidirectional cross-attention, then per-stream self-attention, then
    per-stream feed-forward; residual + layer norm around each sub-block."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        d, h = cfg.d_hidden, cfg.n_heads
        self.cross_l = MultiHeadAttention(d, h, rng, dtype)
        self.cross_v = MultiHeadAttention(d, h, rng, dtype)
        self.ln_cl, self.ln_cv = LayerNorm(d, dtype), LayerNorm(d, dtype)
        self.self_l = MultiHeadAttention(d, h, rng, dtype)
        self.self_v = MultiHeadAttention(d, h, rng, dtype)
        self.ln_sl, self.ln_sv = LayerNorm(d, dtype), LayerNorm(d, dtype)
        self.ffn_l = FeedForward(d, cfg.ffn_ratio, rng, dtype)
        self.ffn_v = FeedForward(d, cfg.ffn_ratio, rng, dtype)
        self.ln_fl, self.ln_fv = LayerNorm(d, dtype), LayerNorm(d, dtype)

    def __call__(self, lang: Tensor, vis: Tensor, lmask: np.ndarray, vmask: np.ndarray):
        lang, vis = (self.ln_cl(lang + self.cross_l(lang, vis, vmask)),
                     self.ln_cv(vis + self.cross_v(vis, lang, lmask)))
        lang = self.ln_sl(lang + self.self_l(lang, lang, lmask))
        vis = self.ln_sv(vis + self.self_v(vis, vis, vmask))
        return self.ln_fl(lang + self.ffn_l(lang)), self.ln_fv(vis + self.ffn_v(vis))


# ---------------------------------------------------------------- encoder


@dataclass
class EncoderOutput:
    q_out: Tensor        # [B, T, d], position 0 is CLS
    v_out: Tensor        # [B, N, d]
    cls: Tensor          # [B, d]
    tap_q: Tensor
    tap_v: Tensor
    q_mask: np.ndarray
    v_mask: np.ndarray


class VLEncoder(Module):
    def __init__(self, cfg: ModelConfig, n_words: int, feature_dim: int, seed: int = 0,
                 dtype=np.float32):
        rng = np.random.default_rng(seed)
        d = cfg.d_hidden
        self.cfg = cfg
        self.dtype = dtype
        self.word_emb = init_normal(rng, (n_words, d), dtype=dtype)
        self.pos_emb = init_normal(rng, (cfg.max_tokens + 1, d), dtype=dtype)
        self.ln_q = LayerNorm(d, dtype)
        self.obj_feat = Linear(feature_dim, d, rng, dtype)
        self.obj_box = Linear(7, d, rng, dtype)
        self.ln_v = LayerNorm(d, dtype)
        self.lang_layers = [SelfBlock(cfg, rng, dtype) for _ in range(cfg.L_lang)]
        self.vis_layers = [SelfBlock(cfg, rng, dtype) for _ in range(cfg.L_vis)]
        self.cross_layers = [CrossBlock(cfg, rng, dtype) for _ in range(cfg.L_x)]
        self.ans_hidden = Linear(d, d, rng, dtype)
        self.ans_ln = LayerNorm(d, dtype)
        self.ans_out = Linear(d, cfg.answer_vocab_size, rng, dtype)

    def reset_visual_projection(self, feature_dim: int, seed: int) -> None:
        """Fresh feature projection, used when the visual input space changes."""
        self.obj_feat = Linear(feature_dim, self.cfg.d_hidden, np.random.default_rng(seed), self.dtype)

    def embed_question(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids)
        if ids.shape[-1] > self.cfg.max_tokens + 1:
            raise F.ShapeError(f"{ids.shape[-1] - 1} tokens exceed max_tokens {self.cfg.max_tokens}")
        x = F.embedding(self.word_emb, ids) + self.pos_emb[: ids.shape[-1]]
        return self.ln_q(x)

    def embed_objects(self, features: np.ndarray, boxes: np.ndarray) -> Tensor:
        f = Tensor(np.asarray(features, dtype=self.dtype))
        b = Tensor(np.asarray(boxes, dtype=self.dtype))
        return self.ln_v((self.obj_feat(f) + self.obj_box(b)) * 0.5)

    def encode(self, q: Tensor, v: Tensor, q_mask: np.ndarray, v_mask: np.ndarray) -> EncoderOutput:
        q_mask = np.asarray(q_mask, dtype=bool)
        v_mask = np.asarray(v_mask, dtype=bool)
        if q_mask.shape != q.shape[:2] or v_mask.shape != v.shape[:2]:
            raise F.ShapeError("mask shapes do not match the embedded inputs")
        for layer in self.lang_layers:
            q = layer(q, q_mask)
        for layer in self.vis_layers:
            v = layer(v, v_mask)
        tap_q, tap_v = q, v
        for layer in self.cross_layers:
            q, v = layer(q, v, q_mask, v_mask)
        if self.cfg.tap == "crossmodal":
            tap_q, tap_v = q, v
        return EncoderOutput(q, v, q[:, 0, :], tap_q, tap_v, q_mask, v_mask)

    def __call__(self, ids, q_mask, features, boxes, v_mask) -> EncoderOutput:
        return self.encode(self.embed_question(ids), self.embed_objects(features, boxes), q_mask, v_mask)

    def answer_logits(self, cls: Tensor) -> Tensor:
        return self.ans_out(self.ans_ln(F.gelu(self.ans_hidden(cls))))
