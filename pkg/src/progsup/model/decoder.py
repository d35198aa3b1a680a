"""Coarse-to-fine program decoder.

A GRU started from the CLS embedding emits the operation sequence; each
step's hidden state then scores question tokens, visual objects and earlier
operations as arguments.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..autodiff import Module, Tensor, init_normal, init_zeros
from ..autodiff import functional as F
from ..program import (ArgTargets, DEFAULT_MAX_OPS, DESK_VOCAB, OperationVocab, Program, ProgramOp,
                       VisualRef)
from .encoder import Linear


@dataclass(frozen=True)
class DecoderConfig:
    n_maxop: int = DEFAULT_MAX_OPS
    d_hidden: int = 64
    n_ops: int = len(DESK_VOCAB)
    stop_index: int = DESK_VOCAB.stop_index
    threshold: float = 0.5

    def __post_init__(self):
        if self.n_maxop < 1:
            raise ValueError("n_maxop must be at least 1")
        if self.d_hidden < 2 or self.n_ops < 1:
            raise ValueError("decoder widths must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProgramPrediction:
    op_logits: Tensor      # [B, S, N_op]
    hidden: Tensor         # [B, S, d]
    a_q_scores: Tensor     # [B, S, T] over question tokens (CLS excluded)
    a_v_scores: Tensor     # [B, S, N]
    a_d_scores: Tensor     # [B, S, N_maxop]


@dataclass
class ProgramBatch:
    """Ground truth for a batch, padded to a common number of steps.

    ``ops`` has ``S = max_len + 1`` columns: the program's operations and then
    STOP.  ``step_mask`` marks the supervised CE steps (operations plus the
    terminal STOP); ``op_mask`` marks operations only.
    """
    ops: np.ndarray        # [B, S] int
    step_mask: np.ndarray  # [B, S] bool
    op_mask: np.ndarray    # [B, S] bool
    a_q: np.ndarray        # [B, S, T]
    a_v: np.ndarray        # [B, S, N]
    a_d: np.ndarray        # [B, S, N_maxop]

    @classmethod
    def build(cls, programs: Sequence[Program], targets: Sequence[ArgTargets], n_tokens: int,
              n_objects: int, vocab: OperationVocab = DESK_VOCAB, n_maxop: int = DEFAULT_MAX_OPS):
        b = len(programs)
        s = max((len(p.ops) for p in programs), default=0) + 1
        ops = np.full((b, s), vocab.stop_index, dtype=np.int64)
        step_mask = np.zeros((b, s), dtype=bool)
        op_mask = np.zeros((b, s), dtype=bool)
        a_q = np.zeros((b, s, n_tokens))
        a_v = np.zeros((b, s, n_objects))
        a_d = np.zeros((b, s, n_maxop))
        for k, (p, t) in enumerate(zip(programs, targets)):
            n = len(p.ops)
            if n > n_maxop:
                raise ValueError(f"program of {n} operations exceeds n_maxop {n_maxop}")
            ops[k, :n] = [vocab.index(op.op) for op in p.ops]
            step_mask[k, : n + 1] = True
            op_mask[k, :n] = True
            a_q[k, :n, : t.a_q.shape[1]] = t.a_q
            a_v[k, :n, : t.a_v.shape[1]] = t.a_v
            a_d[k, :n] = t.a_d[:, :n_maxop]
        return cls(ops, step_mask, op_mask, a_q, a_v, a_d)


class Affinity(Module):
    """Two-layer MLP over ``concat(h_i, x_j)`` evaluated for every (i, j) pair.

    The first layer's weight is split into the ``h`` half and the ``x`` half so
    the pairwise hidden layer is a broadcast sum rather than a concatenation.
    """

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.w_h = init_normal(rng, (d, d // 2), dtype=dtype)
        self.w_x = init_normal(rng, (d, d // 2), dtype=dtype)
        self.b1 = init_zeros((d // 2,), dtype=dtype)
        self.w2 = init_normal(rng, (d // 2, 1), dtype=dtype)
        self.b2 = init_zeros((1,), dtype=dtype)

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        # h [B, S, d], x [B, T, d] -> [B, S, T]
        hh = F.linear(h, self.w_h)[:, :, None, :]
        xx = F.linear(x, self.w_x, self.b1)[:, None, :, :]
        hidden = F.gelu(hh + xx)
        out = F.linear(hidden, self.w2, self.b2)
        return out.reshape(out.shape[:3])


class GRU(Module):
    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator, dtype=np.float32):
        self.w_ih = init_normal(rng, (d_in, 3 * d_h), dtype=dtype)
        self.w_hh = init_normal(rng, (d_h, 3 * d_h), dtype=dtype)
        self.b_ih = init_zeros((3 * d_h,), dtype=dtype)
        self.b_hh = init_zeros((3 * d_h,), dtype=dtype)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return F.gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class ProgramDecoder(Module):
    def __init__(self, cfg: DecoderConfig, d_model: int, seed: int = 1, dtype=np.float32):
        rng = np.random.default_rng(seed)
        d = cfg.d_hidden
        self.cfg = cfg
        self.dtype = dtype
        self.init_proj = Linear(d_model, d, rng, dtype) if d_model != d else None
        self.arg_proj = Linear(d_model, d, rng, dtype) if d_model != d else None
        # row n_ops is the start token
        self.op_emb = init_normal(rng, (cfg.n_ops + 1, d), dtype=dtype)
        self.gru = GRU(d, d, rng, dtype)
        self.op_hidden = Linear(d, d // 2, rng, dtype)
        self.op_out = Linear(d // 2, cfg.n_ops, rng, dtype)
        self.q_aff = Affinity(d, rng, dtype)
        self.v_aff = Affinity(d, rng, dtype)
        self.dep_gru = GRU(d, d, rng, dtype)
        self.dep_out = Linear(d, cfg.n_maxop, rng, dtype)

    # -------------------------------------------------------- pieces

    def _h0(self, cls: Tensor) -> Tensor:
        return self.init_proj(cls) if self.init_proj is not None else cls

    def _ctx(self, x: Tensor) -> Tensor:
        return self.arg_proj(x) if self.arg_proj is not None else x

    def classify(self, h: Tensor) -> Tensor:
        return self.op_out(F.gelu(self.op_hidden(h)))

    def decode_coarse(self, cls: Tensor, gt_ops: Optional[np.ndarray] = None):
        """Teacher-forced when ``gt_ops`` ``[B, S]`` is given (S steps, inputs are
        start + gt_ops[:, :S-1]); free greedy decoding otherwise.

        Returns ``(op_logits [B, S, N_op], hidden [B, S, d])``.  In free mode
        a row's steps after its first STOP are still computed but ignored by
        :meth:`predict`.
        """
        h = self._h0(cls)
        b = cls.shape[0]
        start = np.full(b, self.cfg.n_ops, dtype=np.int64)
        hiddens, logits = [], []
        if gt_ops is not None:
            gt_ops = np.asarray(gt_ops, dtype=np.int64)
            inputs = np.concatenate([start[:, None], gt_ops[:, :-1]], axis=1)
            for step in range(gt_ops.shape[1]):
                h = self.gru(F.embedding(self.op_emb, inputs[:, step]), h)
                hiddens.append(h)
            hid = F.stack(hiddens, axis=1)
            return self.classify(hid), hid
        prev = start
        stop = self.cfg.stop_index
        done = np.zeros(b, dtype=bool)
        for step in range(self.cfg.n_maxop + 1):
            h = self.gru(F.embedding(self.op_emb, prev), h)
            lg = self.classify(h)
            hiddens.append(h)
            logits.append(lg)
            prev = np.argmax(lg.data, axis=-1)
            done |= prev == stop
            if done.all():
                break
        return F.stack(logits, axis=1), F.stack(hiddens, axis=1)

    def score_question_args(self, hidden: Tensor, q_out: Tensor) -> Tensor:
        """Scores over word positions; ``q_out`` includes CLS at position 0."""
        return self.q_aff(hidden, self._ctx(q_out[:, 1:, :]))

    def score_visual_args(self, hidden: Tensor, v_out: Tensor) -> Tensor:
        return self.v_aff(hidden, self._ctx(v_out))

    def decode_dep_args(self, hidden: Tensor) -> Tensor:
        zero = Tensor(np.zeros(hidden.shape, dtype=hidden.dtype))
        return self.dep_out(self.dep_gru(zero, hidden))

    def forward(self, cls: Tensor, q_out: Tensor, v_out: Tensor,
                gt_ops: Optional[np.ndarray] = None) -> ProgramPrediction:
        op_logits, hidden = self.decode_coarse(cls, gt_ops)
        return ProgramPrediction(op_logits, hidden, self.score_question_args(hidden, q_out),
                                 self.score_visual_args(hidden, v_out), self.decode_dep_args(hidden))

    __call__ = forward

    # -------------------------------------------------------- inference

    def predict(self, cls: Tensor, q_out: Tensor, v_out: Tensor, n_tokens: Sequence[int],
                n_objects: Sequence[int], vocab: OperationVocab = DESK_VOCAB) -> list[Program]:
        """Greedy decoding then arguments thresholded at ``cfg.threshold``.

        Dependencies are restricted to earlier operations, so every output
        validates (operations beyond ``n_maxop`` are never produced).
        """
        pred = self.forward(cls, q_out, v_out)
        ops = np.argmax(pred.op_logits.data, axis=-1)
        logit_thr = float(np.log(self.cfg.threshold / (1.0 - self.cfg.threshold)))
        out = []
        for k in range(ops.shape[0]):
            prog = []
            for i in range(min(ops.shape[1], self.cfg.n_maxop)):
                label = vocab.labels[ops[k, i]]
                if ops[k, i] == vocab.stop_index:
                    break
                q = np.nonzero(pred.a_q_scores.data[k, i, : n_tokens[k]] >= logit_thr)[0]
                v = np.nonzero(pred.a_v_scores.data[k, i, : n_objects[k]] >= logit_thr)[0]
                d = np.nonzero(pred.a_d_scores.data[k, i, :i] >= logit_thr)[0]
                prog.append(ProgramOp(label, tuple(int(t) for t in q),
                                      tuple(VisualRef(int(j), None) for j in v), tuple(int(j) for j in d)))
            out.append(Program(tuple(prog)))
        return out


def program_losses(pred: ProgramPrediction, gt: ProgramBatch, q_mask: np.ndarray,
                   v_mask: np.ndarray) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """``(L_op, L_qarg, L_varg, L_dep)``.

    ``q_mask`` ``[B, T]`` covers word positions (no CLS); ``v_mask`` ``[B, N]``
    covers objects.  BCE means run over operation rows only, and the
    dependency mask admits column ``j`` of row ``i`` only when ``j < i``.
    """
    b, s = gt.ops.shape
    if pred.op_logits.shape[:2] != (b, s):
        raise ValueError(f"prediction has {pred.op_logits.shape[:2]} steps, ground truth {(b, s)}")
    l_op = F.cross_entropy(pred.op_logits, gt.ops, mask=gt.step_mask)
    rows = gt.op_mask[:, :, None]
    l_q = F.binary_cross_entropy(pred.a_q_scores, gt.a_q, mask=rows & np.asarray(q_mask, bool)[:, None, :])
    l_v = F.binary_cross_entropy(pred.a_v_scores, gt.a_v, mask=rows & np.asarray(v_mask, bool)[:, None, :])
    earlier = dependency_mask(s, pred.a_d_scores.shape[-1])
    l_d = F.binary_cross_entropy(pred.a_d_scores, gt.a_d, mask=rows & earlier[None])
    return l_op, l_q, l_v, l_d


def dependency_mask(n_steps: int, n_maxop: int) -> np.ndarray:
    """Admissible dependency cells: ``mask[i, j]`` iff ``j < i``."""
    return np.arange(n_maxop)[None, :] < np.arange(n_steps)[:, None]
