import json

import pytest

from progsup.cli import apply_override, default_config, load_config, run

TINY = ["--set", "model.d_hidden=16", "--set", "model.n_heads=2", "--set", "model.L_lang=1",
        "--set", "model.L_vis=1", "--set", "model.L_x=1", "--set", "train.epochs=1",
        "--set", "train.batch_size=64"]


def test_overrides_parse_json_values():
    cfg = default_config()
    apply_override(cfg, "train.lr=0.01")
    apply_override(cfg, "model.tap=unimodal")
    apply_override(cfg, "train.use_varg=false")
    assert cfg["train"]["lr"] == 0.01 and cfg["model"]["tap"] == "unimodal"
    assert cfg["train"]["use_varg"] is False


def test_unknown_keys_are_usage_errors(tmp_path, capsys):
    assert run(["theory", "constant", "--set", "train.nope=1"]) == 2
    (tmp_path / "c.json").write_text(json.dumps({"model": {"width": 3}}))
    assert run(["theory", "constant", "--config", str(tmp_path / "c.json")]) == 2
    assert run(["bogus"]) == 2
    assert run(["gen"]) == 2


def test_config_file_and_override_merge(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"epochs": 3}}))
    cfg = load_config(str(tmp_path / "c.json"), ["train.seed=4"])
    assert cfg["train"]["epochs"] == 3 and cfg["train"]["seed"] == 4



def test_desk_preset_sits_under_file_and_overrides(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"epochs": 3}}))
    cfg = load_config(str(tmp_path / "c.json"), ["model.L_x=2"], preset="desk")
    assert cfg["train"]["lr"] == 2e-3 and cfg["train"]["epochs"] == 3
    assert cfg["model"]["L_x"] == 2 and cfg["transfer"]["pretrain_epochs"] == 15
    assert load_config(None)["transfer"]["pretrain_epochs"] is None


def test_bad_pretrain_epochs_is_usage_error(tmp_path):
    args = ["transfer", "--oracle", "x", "--noisy", "y", "--out", str(tmp_path), "--set", "transfer.pretrain_epochs=-1"]
    assert run(args) == 2

def test_theory_constant(capsys):
    assert run(["theory", "constant", "--m", "1,512"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["C"] == pytest.approx(0.7978845608, abs=1e-9)
    assert 22.5 < rows[1]["C"] < 22.7


def test_theory_csv_output(capsys, tmp_path):
    assert run(["theory", "identities", "--instances", "3", "--format", "csv", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("instance,") and len(out) == 4
    assert (tmp_path / "theory_identities.csv").exists()


def test_end_to_end_gen_train_eval_inspect(tmp_path, capsys):
    data = tmp_path / "data"
    assert run(["gen", "--n", "150", "--mode", "both", "--seed", "3", "--out", str(data)]) == 0
    manifest = json.loads((data / "noisy" / "manifest.json").read_text())
    assert manifest["counts"]["total"] == 150
    assert (data / "config.json").exists()
    run_dir = tmp_path / "run"
    assert run(["train", "--data", str(data / "noisy"), "--out", str(run_dir), "--seed", "1"] + TINY) == 0
    assert json.loads((run_dir / "config.json").read_text())["train"]["seed"] == 1
    assert (run_dir / "metrics.csv").exists()
    capsys.readouterr()
    assert run(["eval", "--checkpoint", str(run_dir / "best.psup"), "--data", str(data / "noisy")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0.0 <= rep["overall_acc"] <= 1.0 and rep["varg_auc"] is not None
    assert run(["inspect", "--data", str(data / "noisy"), "--checkpoint", str(run_dir / "best.psup"),
                "--format", "csv"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("question: ") and "ground truth:" in text and "predicted:" in text
    assert run(["inspect", "--data", str(data / "noisy"), "--index", "100000"]) == 2


def test_missing_dataset_is_a_runtime_error(tmp_path):
    assert run(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 1
