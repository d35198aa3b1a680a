"""Ablation grid: named config deltas trained over shared seeds."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

NO_PROGRAM = dict(use_op=False, use_dep=False, use_qarg=False, use_varg=False)


@dataclass(frozen=True)
class AblationRow:
    """``deltas`` are TrainConfig field overrides; ``transfer`` runs the
    oracle-pretrain then finetune pipeline with the same deltas in both stages."""

    name: str
    deltas: tuple = ()
    transfer: bool = False

    def apply(self, base):
        return replace(base, **dict(self.deltas))


def _row(name: str, transfer: bool = False, **deltas) -> AblationRow:
    return AblationRow(name, tuple(sorted(deltas.items())), transfer)


# supervision-type rows, trained from scratch on the noisy corpus
SUPERVISION_ROWS = (
    _row("vqa_only", **NO_PROGRAM),
    _row("coarse_only", use_op=True, use_dep=False, use_qarg=False, use_varg=False),
    _row("coarse_dep", use_op=True, use_dep=True, use_qarg=False, use_varg=False),
    _row("full_no_varg", use_varg=False),
    _row("full"),
    _row("random_prog", random_program=True),
)

# decoder-attachment rows, in the oracle-transfer setting
TAP_ROWS = (
    _row("no_prog", transfer=True, **NO_PROGRAM),
    _row("unimodal_tap", transfer=True, tap="unimodal"),
    _row("crossmodal_tap", transfer=True, tap="crossmodal"),
)


@dataclass
class AblationSpec:
    rows: tuple = SUPERVISION_ROWS + TAP_ROWS

    def names(self) -> list[str]:
        return [r.name for r in self.rows]

    def select(self, names: Sequence[str]) -> "AblationSpec":
        by_name = {r.name: r for r in self.rows}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise KeyError(f"unknown ablation rows: {missing}")
        return AblationSpec(tuple(by_name[n] for n in names))


@dataclass
class AblationTable:
    records: list[dict] = field(default_factory=list)     # row, seed, split, metric, value
    failures: dict = field(default_factory=dict)          # (row, seed) -> message
    metrics_logs: dict = field(default_factory=dict)      # (row, seed) -> metric rows

    def value(self, row: str, seed: int, metric: str, split: Optional[str] = None) -> Optional[float]:
        """Metric of one cell; ``split`` defaults to the first evaluated split."""
        for r in self.records:
            if (r["row"] == row and r["seed"] == seed and r["metric"] == metric
                    and (split is None or r["split"] == split) and (split is not None or r["primary"])):
                return r["value"]
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "seed", "split", "metric", "value"])
        for r in self.records:
            w.writerow([r["row"], r["seed"], r["split"], r["metric"], repr(float(r["value"]))])
        return buf.getvalue()

    def summary(self) -> dict:
        grouped: dict = {}
        for r in self.records:
            grouped.setdefault(r["row"], {}).setdefault(r["split"], {}).setdefault(
                r["metric"], []).append(float(r["value"]))
        out = {row: {split: {m: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
                             for m, v in ms.items()} for split, ms in by_split.items()}
               for row, by_split in grouped.items()}
        return {"rows": out,
                "failures": {f"{row}/{seed}": msg for (row, seed), msg in self.failures.items()}}


def _run_cell(args):
    """One (row, seed) job; returns the evaluation rates and the training log."""
    from ..model.encoder import TokenVocab
    from ..pipeline import evaluate, prepare, run_oracle_transfer, train_stage

    row, base, dataset, oracle, seed, model_cfg, dec_cfg, eval_splits, pretrain_epochs = args
    config = replace(row.apply(base), seed=seed)
    if row.transfer:
        if oracle is None:
            raise ValueError(f"row {row.name} needs an oracle-mode dataset")
        pretrain = config if pretrain_epochs is None else replace(config, epochs=pretrain_epochs)
        stage1, result = run_oracle_transfer(oracle, dataset, pretrain, config, model_cfg, dec_cfg)
        logs = stage1.metrics + result.metrics
    else:
        result = train_stage(replace(config, stage="scratch"), dataset, None, model_cfg, dec_cfg)
        logs = result.metrics
    mc = result.model.model_cfg
    rates = {}
    for split in eval_splits:
        data = prepare(dataset.split(split), TokenVocab(dataset.words), dataset.answers,
                       dataset.feature_dim, mc.max_tokens, mc.max_objects)
        rates[split] = evaluate(result.model, data, dataset.answers,
                                programs=config.program_supervision).rates()
    return rates, logs


def _cache_key(row: AblationRow, base, seed: int):
    return (row.transfer, replace(row.apply(base), seed=seed))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PROGSUP_THREADS", "1")))
    except ValueError:
        return 1


def run_ablation(spec: AblationSpec, base_config, dataset, seeds: Sequence[int], oracle_dataset=None,
                 model_cfg=None, dec_cfg=None, eval_split="test",
                 workers: Optional[int] = None, pretrain_epochs: Optional[int] = None) -> AblationTable:
    """Train every row for every seed and collect evaluation metrics.

    ``eval_split`` is a split name or a sequence of them; the first one is
    what ``AblationTable.value`` returns by default.  Transfer rows pre-train for ``pretrain_epochs`` (default: the row's own
    ``epochs``) before fine-tuning.
    Rows whose effective configs coincide are trained once.  A failing cell is
    recorded in ``failures`` and the remaining cells still run.  Results are
    merged in (row, seed) order regardless of ``workers``.
    """
    workers = default_workers() if workers is None else workers
    splits = (eval_split,) if isinstance(eval_split, str) else tuple(eval_split)
    if not splits:
        raise ValueError("at least one evaluation split is needed")
    jobs: dict = {}
    for row in spec.rows:
        for seed in seeds:
            key = _cache_key(row, base_config, seed)
            if key not in jobs:
                jobs[key] = (row, base_config, dataset, oracle_dataset, seed, model_cfg, dec_cfg, splits,
                             pretrain_epochs)
    keys = list(jobs)
    outcomes: dict = {}
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(_run_cell, jobs[k]) for k in keys}
            for k in keys:
                try:
                    outcomes[k] = futures[k].result()
                except Exception as exc:   # recorded, other cells proceed
                    outcomes[k] = exc
    else:
        for k in keys:
            try:
                outcomes[k] = _run_cell(jobs[k])
            except Exception as exc:
                outcomes[k] = exc
    table = AblationTable()
    for row in spec.rows:
        for seed in seeds:
            out = outcomes[_cache_key(row, base_config, seed)]
            if isinstance(out, Exception):
                log.warning("ablation row %s seed %d failed: %s", row.name, seed, out)
                table.failures[(row.name, seed)] = f"{type(out).__name__}: {out}"
                continue
            rates, logs = out
            table.metrics_logs[(row.name, seed)] = logs
            for split in splits:
                for metric, value in rates[split].items():
                    if value is not None and math.isfinite(value):
                        table.records.append({"row": row.name, "seed": seed, "split": split,
                                              "primary": split == splits[0], "metric": metric,
                                              "value": value})
    return table


def write_ablation(table: AblationTable, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "ablation.csv", out / "ablation_summary.json"
    csv_path.write_text(table.to_csv(), encoding="utf-8")
    json_path.write_text(json.dumps(table.summary(), indent=2, sort_keys=True), encoding="utf-8")
    return csv_path, json_path
