"""Command-line entry point: ``progsup <command> ...``.

Data goes to files or stdout, progress and logs to stderr.  Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger("progsup")

CONFIG_FILE = "config.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def default_config() -> dict:
    from .model.decoder import DecoderConfig
    from .model.encoder import ModelConfig
    from .pipeline import TrainConfig
    from .synth.dataset import WorldConfig
    dec = DecoderConfig()
    return {
        "world": WorldConfig().to_dict(),
        "model": ModelConfig().to_dict(),
        "decoder": {"n_maxop": dec.n_maxop, "threshold": dec.threshold},
        "train": TrainConfig().to_dict(),
        "transfer": {"pretrain_epochs": None},
    }


def _merge(base: dict, update: dict, path: str = "") -> None:
    for k, v in update.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise UsageError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise UsageError(f"config key {where!r} expects a mapping")
            _merge(base[k], v, where)
        else:
            base[k] = v


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise UsageError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise UsageError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(value)


def load_config(path: Optional[str], overrides: Sequence[str] = (), preset: str = "default") -> dict:
    """Defaults, then the named preset, then the config file, then ``--set`` overrides."""
    cfg = default_config()
    if preset == "desk":
        from .pipeline import DESK_PRESET
        _merge(cfg, copy.deepcopy(DESK_PRESET))
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise UsageError("config file must hold a JSON object")
        _merge(cfg, user)
    for o in overrides:
        apply_override(cfg, o)
    return cfg


def _build(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {cls.__name__}: {exc}") from exc


def world_config(cfg: dict):
    from .synth.dataset import WorldConfig
    try:
        return WorldConfig.from_dict(cfg["world"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid world config: {exc}") from exc


def model_config(cfg: dict):
    from .model.encoder import ModelConfig
    return _build(ModelConfig, cfg["model"])


def train_config(cfg: dict, seed: Optional[int]):
    from .pipeline import TrainConfig
    d = dict(cfg["train"])
    if seed is not None:
        d["seed"] = seed
    return _build(TrainConfig, d)


def _pretrain_epochs(cfg: dict) -> Optional[int]:
    n = cfg["transfer"]["pretrain_epochs"]
    if n is not None and (not isinstance(n, int) or n < 0):
        raise UsageError("transfer.pretrain_epochs must be a non-negative integer or null")
    return n


def pretrain_config(cfg: dict, tc):
    n = _pretrain_epochs(cfg)
    return tc if n is None else replace(tc, epochs=n)


def decoder_config(cfg: dict, mc, n_ops: int):
    from .model.decoder import DecoderConfig
    return DecoderConfig(n_maxop=int(cfg["decoder"]["n_maxop"]), d_hidden=mc.d_hidden, n_ops=n_ops,
                         threshold=float(cfg["decoder"]["threshold"]))


def echo_config(cfg: dict, out: Path, seed: Optional[int]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    eff = copy.deepcopy(cfg)
    if seed is not None:
        eff["train"]["seed"] = seed
    (out / CONFIG_FILE).write_text(json.dumps(eff, indent=2, sort_keys=True), encoding="utf-8")


def _emit(obj, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        rows = obj if isinstance(obj, list) else [obj]
        keys = list(rows[0]) if rows else []
        print(",".join(keys))
        for r in rows:
            print(",".join("" if r[k] is None else str(r[k]) for k in keys))


# ---------------------------------------------------------------- commands


def cmd_gen(args, cfg) -> int:
    from .synth.dataset import generate_corpus, write_dataset
    wc = world_config(cfg)
    out = Path(args.out)
    modes = ("noisy", "oracle") if args.mode == "both" else (args.mode,)
    for mode in modes:
        ds = generate_corpus(args.seed, wc, mode, n_samples=args.n)
        target = out / mode if len(modes) > 1 else out
        write_dataset(ds, target)
        log.info("wrote %d %s samples to %s", len(ds.samples), mode, target)
    echo_config(cfg, out, args.seed)
    return 0


def _load_ds(path):
    from .synth.dataset import read_dataset
    return read_dataset(path)


def cmd_train(args, cfg) -> int:
    from .pipeline import load_checkpoint, model_from_checkpoint, train_stage
    ds = _load_ds(args.data)
    tc = train_config(cfg, args.seed)
    mc = model_config(cfg)
    init = model_from_checkpoint(load_checkpoint(args.init)) if args.init else None
    out = Path(args.out)
    echo_config(cfg, out, tc.seed)
    res = train_stage(tc, ds, init, mc, decoder_config(cfg, mc, len(ds.operations)), out)
    log.info("best epoch %d after %d steps", res.best_epoch, res.steps)
    return 0


def cmd_transfer(args, cfg) -> int:
    from .pipeline import run_oracle_transfer
    tc = train_config(cfg, args.seed)
    pre = pretrain_config(cfg, tc)
    mc = model_config(cfg)
    oracle, noisy = _load_ds(args.oracle), _load_ds(args.noisy)
    out = Path(args.out)
    echo_config(cfg, out, tc.seed)
    run_oracle_transfer(oracle, noisy, pre, tc, mc, decoder_config(cfg, mc, len(noisy.operations)), out)
    return 0


def cmd_eval(args, cfg) -> int:
    from .model.encoder import TokenVocab
    from .pipeline import evaluate, load_checkpoint, model_from_checkpoint, prepare
    ds = _load_ds(args.data)
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    mc = model.model_cfg
    p = prepare(ds.split(args.split), TokenVocab(ds.words), ds.answers, ds.feature_dim,
                mc.max_tokens, mc.max_objects)
    rep = evaluate(model, p, ds.answers, programs=True)
    if args.format == "json":
        _emit(rep.to_dict(), "json")
    else:
        _emit([{"metric": k, "value": v} for k, v in rep.rates().items()], "csv")
    return 0


def cmd_ablate(args, cfg) -> int:
    from .evaluation.ablation import AblationSpec, run_ablation, write_ablation
    ds = _load_ds(args.data)
    oracle = _load_ds(args.oracle) if args.oracle else None
    spec = AblationSpec()
    if args.rows:
        spec = spec.select([r.strip() for r in args.rows.split(",") if r.strip()])
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed or 0]
    tc = train_config(cfg, None)
    mc = model_config(cfg)
    out = Path(args.out)
    echo_config(cfg, out, None)
    table = run_ablation(spec, tc, ds, seeds, oracle, mc, decoder_config(cfg, mc, len(ds.operations)),
                         pretrain_epochs=_pretrain_epochs(cfg))
    write_ablation(table, out)
    if args.format == "json":
        _emit(table.summary(), "json")
    else:
        sys.stdout.write(table.to_csv())
    return 1 if table.failures and not table.records else 0


def cmd_theory(args, cfg) -> int:
    from . import theory
    seed = args.seed or 0
    out = Path(args.out) if args.out else None
    if args.what == "constant":
        ms = [int(m) for m in args.m.split(",")]
        rows = []
        for m in ms:
            est, se = theory.mc_gamma_constant(m, args.samples, seed) if args.samples else (None, None)
            rows.append({"m": m, "C": theory.gamma_constant(m), "mc_estimate": est, "stderr": se})
        text_rows = rows
    elif args.what == "bounds":
        reps = theory.bound_sweep(args.instances, seed)
        text_rows = [{"instance": i, "empirical_norm": r.empirical_norm, "bound": r.analytic_bound,
                      "margin": r.margin} for i, r in enumerate(reps)]
    elif args.what == "identities":
        text_rows = [{"instance": i, **theory.verify_identity_chain(seed * 100003 + i)}
                     for i in range(args.instances)]
    else:
        cc = theory.CurveConfig(R=args.R, d=args.d, m=args.m_out)
        grid = [int(n) for n in args.n_grid.split(",")]
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [seed]
        pts = []
        for mode in ("joint", "decomposed"):
            pts.extend(theory.sample_complexity_curve(cc, mode, grid, seeds))
        text_rows = [{"mode": p.mode, "n": p.n, "seed": p.seed, "test_error": p.test_error} for p in pts]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        import csv
        with open(out / f"theory_{args.what}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(text_rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(text_rows)
    _emit(text_rows, args.format)
    return 0


def cmd_inspect(args, cfg) -> int:
    from .model.encoder import TokenVocab
    from .pipeline import load_checkpoint, model_from_checkpoint, predict, prepare
    from .program import format_tree, program_to_dict
    ds = _load_ds(args.data)
    samples = ds.split(args.split)
    if not 0 <= args.index < len(samples):
        raise UsageError(f"index {args.index} out of range for {len(samples)} {args.split} samples")
    s = samples[args.index]
    pred_prog, pred_answer = None, None
    if args.checkpoint:
        model = model_from_checkpoint(load_checkpoint(args.checkpoint))
        mc = model.model_cfg
        p = prepare([s], TokenVocab(ds.words), ds.answers, ds.feature_dim, mc.max_tokens, mc.max_objects)
        pr = predict(model, p, ds.answers)
        pred_prog, pred_answer = pr.programs[0], pr.answers[0]
    if args.format == "json":
        _emit({"sample_id": s.sample_id, "question": " ".join(s.tokens), "answer": s.answer,
               "predicted_answer": pred_answer, "ground_truth": program_to_dict(s.program),
               "predicted": program_to_dict(pred_prog) if pred_prog is not None else None}, "json")
        return 0
    print(f"question: {' '.join(s.tokens)}")
    print(f"answer: {s.answer}" + (f"  (predicted: {pred_answer})" if pred_answer is not None else ""))
    print("ground truth:")
    print(format_tree(s.program, s.tokens))
    if pred_prog is not None:
        print("predicted:")
        print(format_tree(pred_prog, s.tokens))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", choices=("default", "desk"), default="default",
                        help="starting configuration before --config and --set")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value by dotted path (repeatable)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="progsup", description="Program-supervised VQA toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--n", type=int, default=None, help="number of samples")
    g.add_argument("--mode", choices=("noisy", "oracle", "both"), default="noisy")

    t = sub.add_parser("train", parents=[common], help="train one stage")
    t.add_argument("--data", required=True)
    t.add_argument("--init", help="checkpoint to start from")

    tr = sub.add_parser("transfer", parents=[common], help="oracle pretraining then noisy finetuning")
    tr.add_argument("--oracle", required=True)
    tr.add_argument("--noisy", required=True)

    e = sub.add_parser("eval", parents=[common], help="metrics of a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))

    a = sub.add_parser("ablate", parents=[common], help="run the ablation grid")
    a.add_argument("--data", required=True)
    a.add_argument("--oracle", help="oracle-mode dataset for the transfer rows")
    a.add_argument("--rows", help="comma-separated row names")
    a.add_argument("--seeds", help="comma-separated seeds")

    th = sub.add_parser("theory", parents=[common], help="sample-complexity experiments")
    th.add_argument("what", choices=("constant", "bounds", "identities", "curves"))
    th.add_argument("--m", default="512", help="dimension(s) for the constant, comma-separated")
    th.add_argument("--samples", type=int, default=0, help="Monte-Carlo draws for the constant")
    th.add_argument("--instances", type=int, default=100)
    th.add_argument("--R", type=int, default=4)
    th.add_argument("--d", type=int, default=16)
    th.add_argument("--m-out", type=int, default=4)
    th.add_argument("--n-grid", default="64,128,256,512")
    th.add_argument("--seeds", help="comma-separated seeds")

    i = sub.add_parser("inspect", parents=[common], help="print ground-truth and predicted programs")
    i.add_argument("--data", required=True)
    i.add_argument("--checkpoint")
    i.add_argument("--split", default="test", choices=("train", "val", "test"))
    i.add_argument("--index", type=int, default=0)
    return ap


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "transfer": cmd_transfer, "eval": cmd_eval,
            "ablate": cmd_ablate, "theory": cmd_theory, "inspect": cmd_inspect}
NEEDS_OUT = ("gen", "train", "transfer", "ablate")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in NEEDS_OUT and not args.out:
            raise UsageError(f"{args.command} requires --out")
        cfg = load_config(args.config, args.set, args.preset)
        threads = os.environ.get("PROGSUP_THREADS")
        if threads:
            from threadpoolctl import threadpool_limits
            threadpool_limits(max(1, int(threads)))
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"progsup: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"progsup: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
