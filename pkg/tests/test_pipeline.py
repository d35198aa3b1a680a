import numpy as np
import pytest

from progsup.model import ModelConfig
from progsup.pipeline import (CheckpointError, TrainConfig, load_checkpoint, metrics_csv, model_from_checkpoint,
                              run_oracle_transfer, save_checkpoint, train_stage)
from progsup.synth import WorldConfig, generate_corpus

MC = ModelConfig(d_hidden=16, n_heads=2, L_lang=1, L_vis=1, L_x=1)
CFG = TrainConfig(epochs=2, batch_size=32, lr=2e-3, seed=1)


@pytest.fixture(scope="module")
def data():
    return (generate_corpus(2, WorldConfig(), "oracle", n_samples=240),
            generate_corpus(2, WorldConfig(), "noisy", n_samples=240))


@pytest.fixture(scope="module")
def trained(data):
    return train_stage(CFG, data[1], model_cfg=MC)


def test_training_is_bit_identical(data, trained):
    again = train_stage(CFG, data[1], model_cfg=MC)
    assert metrics_csv(again.metrics) == metrics_csv(trained.metrics)
    for k, v in trained.model.state_dict().items():
        assert v.tobytes() == again.model.state_dict()[k].tobytes()


def test_seed_changes_the_run(data, trained):
    other = train_stage(TrainConfig(epochs=2, batch_size=32, lr=2e-3, seed=2), data[1], model_cfg=MC)
    assert metrics_csv(other.metrics) != metrics_csv(trained.metrics)


def test_metric_log_has_program_losses(trained):
    names = {(r["split"], r["metric"]) for r in trained.metrics}
    for k in ("loss_vqa", "loss_op", "loss_dep", "loss_qarg", "loss_varg"):
        assert ("train", k) in names
    assert ("val", "varg_auc") in names and ("val", "overall_acc") in names


def test_vqa_only_logs_no_program_losses(data):
    r = train_stage(TrainConfig(epochs=1, batch_size=64, seed=0, use_op=False, use_dep=False,
                                use_qarg=False, use_varg=False), data[1], model_cfg=MC)
    names = {r_["metric"] for r_ in r.metrics}
    assert "loss_op" not in names and "varg_auc" not in names


def test_checkpoint_round_trip_is_bit_exact(trained, tmp_path):
    path = save_checkpoint(tmp_path / "m.psup", trained.model, CFG, trained.optimizer, trained.steps)
    ck = load_checkpoint(path)
    model = model_from_checkpoint(ck)
    for k, v in trained.model.state_dict().items():
        assert model.state_dict()[k].dtype == v.dtype
        assert model.state_dict()[k].tobytes() == v.tobytes()
    assert ck.manifest["step"] == trained.steps
    assert ck.config["train"]["seed"] == 1
    # writing the loaded model again reproduces the file
    again = save_checkpoint(tmp_path / "n.psup", model, CFG, trained.optimizer, trained.steps)
    assert again.read_bytes() == path.read_bytes()


def test_corrupt_checkpoints_are_rejected(trained, tmp_path):
    path = save_checkpoint(tmp_path / "m.psup", trained.model)
    raw = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short")
    (tmp_path / "long").write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "long")


def test_transfer_swaps_visual_projection(data, tmp_path):
    one = TrainConfig(epochs=1, batch_size=64, seed=0)
    s1, s3 = run_oracle_transfer(data[0], data[1], one, one, model_cfg=MC, out_dir=tmp_path)
    assert s1.model.encoder.obj_feat.weight.shape[0] == 24
    assert s3.model.encoder.obj_feat.weight.shape[0] == 32
    np.testing.assert_array_equal(s1.model.encoder.word_emb.data.shape, s3.model.encoder.word_emb.data.shape)
    assert (tmp_path / "oracle" / "best.psup").exists() and (tmp_path / "finetune" / "metrics.csv").exists()
    with pytest.raises(ValueError):
        run_oracle_transfer(data[1], data[0], one, one, model_cfg=MC)


def test_feature_width_mismatch_is_rejected(data, trained):
    with pytest.raises(ValueError):
        train_stage(CFG, data[0], init=trained.model)
