import numpy as np
import pytest

from progsup.evaluation.metrics import MetricsReport, accuracy, program_match, roc_auc, varg_auc
from progsup.program import Program, ProgramOp, chain


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_small_cases():
    assert roc_auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5
    assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert roc_auc([0.3, 0.4], [1, 1]) is None


def test_auc_matches_pairwise_count_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = rng.integers(0, 5, size=40).astype(float)
        y = rng.random(40) < 0.4
        if y.all() or not y.any():
            continue
        assert roc_auc(s, y) == pytest.approx(pairwise_auc(s, y), abs=1e-12)


def test_auc_of_random_scores_is_near_half():
    rng = np.random.default_rng(1)
    assert abs(roc_auc(rng.random(20000), rng.random(20000) < 0.3) - 0.5) < 0.02


def test_varg_auc_binarizes_at_two_thirds():
    scores = [np.array([[0.9, 0.1, 0.5]])]
    targets = [np.array([[0.7, 0.66, 0.2]])]
    # only the first cell passes IoU >= 2/3
    assert varg_auc(scores, targets) == 1.0
    with pytest.raises(ValueError):
        varg_auc(scores, [np.zeros((1, 2))])


def test_accuracy_buckets():
    acc = accuracy(["yes", "red", "no"], ["yes", "blue", "yes"], lambda i: ("tail" if i == 1 else "head",))
    assert acc == {"overall": 1 / 3, "binary": 0.5, "open": 0.0, "head": 0.5, "tail": 0.0}


def test_program_match():
    g = [Program((ProgramOp("select", (1,)), ProgramOp("exist", (), (), (0,))))]
    p = [Program((ProgramOp("select", (1, 2)), ProgramOp("exist", (), (), (0,))))]
    m = program_match(p, g)
    assert m["op_seq_exact_match"] == 1.0
    assert m["qarg_f1"] == pytest.approx(2 / 3)
    assert m["dep_f1"] == 1.0
    assert program_match([chain(["select", "exist"])], [chain(["select", "query_name"])])["op_seq_exact_match"] == 0.0


def test_report_counts_and_rates():
    rep = MetricsReport.build(["yes", "red"], ["yes", "red"], ["head", "tail"])
    assert rep.counts == {"overall": 2, "binary": 1, "open": 1, "head": 1, "tail": 1}
    assert rep.rates()["acc_tail"] == 1.0
    assert "varg_auc" not in rep.rates()
