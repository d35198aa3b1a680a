"""Answer accuracy buckets, ROC AUC and program-prediction metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from ..program import AUC_IOU_THRESHOLD, Program, binarize_targets

BINARY_ANSWERS = ("yes", "no")


def accuracy(preds: Sequence[str], gts: Sequence[str],
             bucket_fn: Optional[Callable[[int], Sequence[str]]] = None) -> dict[str, float]:
    """Exact-match rate per bucket.

    ``bucket_fn(i)`` names the extra buckets sample ``i`` belongs to (for
    example ``("head",)``).  Every sample is in ``overall`` and in exactly one
    of ``binary`` / ``open``.  Empty buckets are absent from the result.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground truths")
    hits: dict[str, list[int]] = {}
    for i, (p, g) in enumerate(zip(preds, gts)):
        names = ["overall", "binary" if g in BINARY_ANSWERS else "open"]
        if bucket_fn is not None:
            names.extend(bucket_fn(i))
        for name in names:
            hits.setdefault(name, []).append(int(p == g))
    return {name: float(np.mean(v)) for name, v in hits.items()}


def roc_auc(scores, labels) -> Optional[float]:
    """Mann-Whitney AUC with ties counted one half; ``None`` for one class."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)   # average ranks give ties half credit
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def varg_auc(scores: Sequence[np.ndarray], soft_targets: Sequence[np.ndarray],
             threshold: float = AUC_IOU_THRESHOLD) -> Optional[float]:
    """AUC over every (operation, object) cell pooled across samples."""
    if len(scores) != len(soft_targets):
        raise ValueError("score and target lists differ in length")
    flat_s = [np.asarray(s).reshape(-1) for s in scores]
    flat_t = [binarize_targets(t, threshold).reshape(-1) for t in soft_targets]
    for s, t in zip(flat_s, flat_t):
        if s.shape != t.shape:
            raise ValueError(f"score cells {s.shape} do not match target cells {t.shape}")
    if not flat_s:
        return None
    return roc_auc(np.concatenate(flat_s), np.concatenate(flat_t))


def _f1(tp: int, fp: int, fn: int) -> Optional[float]:
    if tp + fp + fn == 0:
        return None
    return 2.0 * tp / (2.0 * tp + fp + fn)


def program_match(preds: Sequence[Program], gts: Sequence[Program]) -> dict[str, Optional[float]]:
    """Operation-sequence exact match plus micro F1 of question and
    dependency arguments over aligned operation positions."""
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth program lists differ in length")
    exact = []
    q_counts = [0, 0, 0]
    d_counts = [0, 0, 0]
    for p, g in zip(preds, gts):
        exact.append(p.labels == g.labels)
        for i in range(max(len(p.ops), len(g.ops))):
            pq = set(p.ops[i].q_args) if i < len(p.ops) else set()
            gq = set(g.ops[i].q_args) if i < len(g.ops) else set()
            pd = set(p.ops[i].dep_args) if i < len(p.ops) else set()
            gd = set(g.ops[i].dep_args) if i < len(g.ops) else set()
            for counts, a, b in ((q_counts, pq, gq), (d_counts, pd, gd)):
                counts[0] += len(a & b)
                counts[1] += len(a - b)
                counts[2] += len(b - a)
    return {"op_seq_exact_match": float(np.mean(exact)) if exact else None,
            "qarg_f1": _f1(*q_counts), "dep_f1": _f1(*d_counts)}


@dataclass
class MetricsReport:
    overall_acc: Optional[float] = None
    binary_acc: Optional[float] = None
    open_acc: Optional[float] = None
    acc_head: Optional[float] = None
    acc_tail: Optional[float] = None
    op_seq_exact_match: Optional[float] = None
    qarg_f1: Optional[float] = None
    varg_auc: Optional[float] = None
    dep_f1: Optional[float] = None
    counts: dict = field(default_factory=dict)
    # how visual-argument AUC cells are aggregated
    auc_pooling: str = "pooled"

    def rates(self) -> dict[str, float]:
        """Every metric that is present, as ``name -> value``."""
        return {k: v for k, v in asdict(self).items()
                if k not in ("counts", "auc_pooling") and v is not None}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def build(cls, preds: Sequence[str], gts: Sequence[str], buckets: Sequence[str],
              pred_programs: Optional[Sequence[Program]] = None,
              gt_programs: Optional[Sequence[Program]] = None,
              v_scores: Optional[Sequence[np.ndarray]] = None,
              v_targets: Optional[Sequence[np.ndarray]] = None) -> "MetricsReport":
        acc = accuracy(preds, gts, lambda i: (buckets[i],))
        counts = {"overall": len(gts)}
        for name in ("binary", "open", "head", "tail"):
            counts[name] = sum(1 for i, g in enumerate(gts)
                               if (name == "binary" and g in BINARY_ANSWERS)
                               or (name == "open" and g not in BINARY_ANSWERS)
                               or buckets[i] == name)
        rep = cls(acc.get("overall"), acc.get("binary"), acc.get("open"), acc.get("head"),
                  acc.get("tail"), counts=counts)
        if pred_programs is not None and gt_programs is not None:
            pm = program_match(pred_programs, gt_programs)
            rep.op_seq_exact_match, rep.qarg_f1, rep.dep_f1 = (
                pm["op_seq_exact_match"], pm["qarg_f1"], pm["dep_f1"])
        if v_scores is not None and v_targets is not None:
            rep.varg_auc = varg_auc(v_scores, v_targets)
        return rep
