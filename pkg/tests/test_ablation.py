import json

import pytest

from progsup.evaluation import AblationSpec, run_ablation, write_ablation
from progsup.evaluation.ablation import SUPERVISION_ROWS, TAP_ROWS
from progsup.model import ModelConfig
from progsup.pipeline import TrainConfig
from progsup.synth import WorldConfig, generate_corpus

MC = ModelConfig(d_hidden=16, n_heads=2, L_lang=1, L_vis=1, L_x=1)
BASE = TrainConfig(epochs=1, batch_size=64, lr=2e-3)


@pytest.fixture(scope="module")
def data():
    return (generate_corpus(4, WorldConfig(), "noisy", n_samples=200),
            generate_corpus(4, WorldConfig(), "oracle", n_samples=200))


def test_rows_express_the_intended_switches():
    rows = {r.name: r.apply(BASE) for r in SUPERVISION_ROWS + TAP_ROWS}
    assert not rows["vqa_only"].program_supervision
    assert rows["coarse_only"].weights() == (1.0, 0.0, 0.0, 0.0)
    assert rows["coarse_dep"].weights() == (1.0, 1.0, 0.0, 0.0)
    assert rows["full_no_varg"].weights()[3] == 0.0
    assert rows["full"].weights() == BASE.weights()
    assert rows["random_prog"].random_program
    assert rows["unimodal_tap"].tap == "unimodal"
    assert all(r.transfer for r in TAP_ROWS)


def test_unknown_row_is_rejected():
    with pytest.raises(KeyError):
        AblationSpec().select(["full", "nope"])


def test_grid_is_deterministic_and_deduplicated(data, tmp_path):
    spec = AblationSpec().select(["vqa_only", "full", "crossmodal_tap"])
    t1 = run_ablation(spec, BASE, data[0], [0], data[1], MC, eval_split=("test", "val"), workers=1)
    t2 = run_ablation(spec, BASE, data[0], [0], data[1], MC, eval_split=("test", "val"), workers=1)
    assert t1.to_csv() == t2.to_csv()
    assert not t1.failures
    assert t1.value("full", 0, "varg_auc") is not None
    assert t1.value("vqa_only", 0, "varg_auc") is None
    assert t1.value("full", 0, "overall_acc") == t1.value("full", 0, "overall_acc", split="test")
    assert t1.value("full", 0, "overall_acc", split="val") is not None
    csv_path, json_path = write_ablation(t1, tmp_path)
    summary = json.loads(json_path.read_text())
    assert summary["rows"]["full"]["val"]["overall_acc"]["n"] == 1
    assert csv_path.read_text().startswith("row,seed,split,metric,value\n")


def test_transfer_rows_pretrain_for_their_own_epoch_count(data):
    spec = AblationSpec().select(["no_prog"])
    t = run_ablation(spec, BASE, data[0], [0], data[1], MC, workers=1, pretrain_epochs=BASE.epochs + 1)
    log = t.metrics_logs[("no_prog", 0)]
    last = {stage: max(m["epoch"] for m in log if m["stage"] == stage) for stage in ("oracle_pretrain", "finetune")}
    assert last["oracle_pretrain"] == last["finetune"] + 1


def test_transfer_row_without_oracle_is_recorded_as_failure(data):
    spec = AblationSpec().select(["no_prog", "vqa_only"])
    t = run_ablation(spec, BASE, data[0], [0], None, MC, workers=1)
    assert ("no_prog", 0) in t.failures
    assert t.value("vqa_only", 0, "overall_acc") is not None
