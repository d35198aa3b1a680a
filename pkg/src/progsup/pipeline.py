"""Training: combined loss, schedule, staged oracle transfer, checkpoints, logs."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Adam, Module, Tape, Tensor
from .autodiff import functional as F
from .evaluation.metrics import MetricsReport
from .model.decoder import DecoderConfig, ProgramBatch, ProgramDecoder, ProgramPrediction, program_losses
from .model.encoder import ModelConfig, TokenVocab, VLEncoder
from .program import DEFAULT_MAX_OPS, DESK_VOCAB, Box, Program, build_arg_targets
from .synth.dataset import Dataset, Sample

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PSUP"
CHECKPOINT_VERSION = 1
METRIC_FIELDS = ("stage", "epoch", "split", "metric", "value", "seed")


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0      # operations
    beta: float = 1.0       # dependency arguments
    gamma: float = 1.0      # question arguments
    delta: float = 100.0    # visual arguments
    lr: float = 1e-4
    warmup_fraction: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    stage: str = "scratch"
    visual_mode: str = "noisy"
    use_op: bool = True
    use_dep: bool = True
    use_qarg: bool = True
    use_varg: bool = True
    random_program: bool = False
    tap: str = "crossmodal"
    grad_clip: Optional[float] = None
    keep_best: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.stage not in ("oracle_pretrain", "finetune", "scratch"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.visual_mode not in ("oracle", "noisy"):
            raise ValueError(f"unknown visual_mode {self.visual_mode!r}")
        if self.tap not in ("unimodal", "crossmodal"):
            raise ValueError(f"unknown tap {self.tap!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def weights(self) -> tuple[float, float, float, float]:
        """Effective ``(alpha, beta, gamma, delta)`` after the per-loss switches."""
        return (self.alpha if self.use_op else 0.0, self.beta if self.use_dep else 0.0,
                self.gamma if self.use_qarg else 0.0, self.delta if self.use_varg else 0.0)

    @property
    def program_supervision(self) -> bool:
        return any(w > 0 for w in self.weights())

    def to_dict(self) -> dict:
        return asdict(self)


# Settings under which the desk-scale orderings are reproduced on the default
# synthetic corpus within hours on one core.  The library defaults above keep
# the published optimiser settings, which barely move a small model in 10 epochs.
DESK_PRESET = {
    "model": {"d_hidden": 64, "n_heads": 4, "L_lang": 2, "L_vis": 1, "L_x": 1},
    "train": {"epochs": 10, "lr": 2e-3, "batch_size": 128, "delta": 1.0},
    "transfer": {"pretrain_epochs": 15},
}


# ---------------------------------------------------------------- losses and schedule


def combine_losses(l_vqa, l_op, l_dep, l_qarg, l_varg, weights=(1.0, 1.0, 1.0, 100.0)):
    """``L_vqa + a*L_op + b*L_dep + g*L_qarg + d*L_varg``; zero-weighted terms are skipped."""
    a, b, g, d = weights
    total = l_vqa
    for w, term in ((a, l_op), (b, l_dep), (g, l_qarg), (d, l_varg)):
        if w != 0 and term is not None:
            total = total + term * w
    return total


def total_loss(vqa_logits: Tensor, answers: np.ndarray, prediction: Optional[ProgramPrediction],
               targets: Optional[ProgramBatch], weights=(1.0, 1.0, 1.0, 100.0),
               q_mask: Optional[np.ndarray] = None, v_mask: Optional[np.ndarray] = None):
    """Answer cross-entropy plus the weighted program losses.

    Returns ``(total, components)`` with components keyed ``vqa, op, dep,
    qarg, varg``.  ``q_mask`` covers word positions, ``v_mask`` objects.
    """
    l_vqa = F.cross_entropy(vqa_logits, answers)
    comps = {"vqa": l_vqa}
    if prediction is not None and any(w != 0 for w in weights):
        l_op, l_q, l_v, l_d = program_losses(prediction, targets, q_mask, v_mask)
        comps.update(op=l_op, dep=l_d, qarg=l_q, varg=l_v)
        return combine_losses(l_vqa, l_op, l_d, l_q, l_v, weights), comps
    return l_vqa, comps


def lr_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warm-up from 0 to ``config.lr``, then linear decay to 0."""
    if total_steps <= 0:
        return 0.0
    step = min(max(step, 0), total_steps)
    warm = config.warmup_fraction * total_steps
    if warm > 0 and step < warm:
        return config.lr * step / warm
    if total_steps == warm:
        return config.lr
    return config.lr * (total_steps - step) / (total_steps - warm)


# ---------------------------------------------------------------- batching


@dataclass
class Prepared:
    """Dense per-sample arrays for one split, padded to split-wide maxima."""
    ids: np.ndarray          # [M, T+1]  (CLS first)
    q_mask: np.ndarray       # [M, T+1]
    feats: np.ndarray        # [M, N, F]
    boxes: np.ndarray        # [M, N, 7]
    v_mask: np.ndarray       # [M, N]
    answers: np.ndarray      # [M]
    samples: list[Sample]

    def __len__(self) -> int:
        return len(self.samples)


def _box_array(boxes: Sequence[Box], n: int) -> np.ndarray:
    out = np.zeros((n, 7))
    for i, b in enumerate(boxes):
        out[i] = b.features()
    return out


def prepare(samples: Sequence[Sample], vocab: TokenVocab, answers: Sequence[str],
            feature_dim: int, max_tokens: int, max_objects: int) -> Prepared:
    ans_index = {a: i for i, a in enumerate(answers)}
    m = len(samples)
    t = max([len(s.tokens) for s in samples] + [1])
    n = max([len(s.objects) for s in samples] + [1])
    if t > max_tokens:
        raise ValueError(f"question of {t} tokens exceeds max_tokens {max_tokens}")
    if n > max_objects:
        raise ValueError(f"scene of {n} objects exceeds max_objects {max_objects}")
    ids = np.zeros((m, t + 1), dtype=np.int64)
    q_mask = np.zeros((m, t + 1), dtype=bool)
    feats = np.zeros((m, n, feature_dim))
    boxes = np.zeros((m, n, 7))
    v_mask = np.zeros((m, n), dtype=bool)
    ans = np.zeros(m, dtype=np.int64)
    for k, s in enumerate(samples):
        e = vocab.encode(s.tokens)
        ids[k, : len(e)] = e
        q_mask[k, : len(e)] = True
        no = len(s.objects)
        if no:
            feats[k, :no] = s.features
            boxes[k, :no] = _box_array(s.boxes, no)
            v_mask[k, :no] = True
        ans[k] = ans_index[s.answer]
    return Prepared(ids, q_mask, feats, boxes, v_mask, ans, list(samples))


def program_batch(samples: Sequence[Sample], n_tokens: int, n_objects: int,
                  programs: Optional[Sequence[Program]] = None) -> ProgramBatch:
    """Targets for ``samples``; ``programs`` overrides the stored programs
    (used by the random-program ablation), with targets recomputed against
    each sample's own tokens and detections."""
    progs = [s.program for s in samples] if programs is None else list(programs)
    targets = [build_arg_targets(p, len(s.tokens), s.boxes, DEFAULT_MAX_OPS)
               for p, s in zip(progs, samples)]
    return ProgramBatch.build(progs, targets, n_tokens, n_objects, DESK_VOCAB, DEFAULT_MAX_OPS)


# ---------------------------------------------------------------- model


class VQAModel(Module):
    """Encoder with answer head plus the program decoder attached at the tap."""

    def __init__(self, model_cfg: ModelConfig, dec_cfg: DecoderConfig, n_words: int,
                 feature_dim: int, seed: int = 0, dtype=np.float32):
        self.model_cfg = model_cfg
        self.dec_cfg = dec_cfg
        self.encoder = VLEncoder(model_cfg, n_words, feature_dim, seed=seed, dtype=dtype)
        self.decoder = ProgramDecoder(dec_cfg, model_cfg.d_hidden, seed=seed + 7919, dtype=dtype)

    def forward(self, ids, q_mask, feats, boxes, v_mask, gt_ops: Optional[np.ndarray] = None,
                with_program: bool = True):
        enc = self.encoder(ids, q_mask, feats, boxes, v_mask)
        logits = self.encoder.answer_logits(enc.cls)
        pred = None
        if with_program:
            pred = self.decoder(enc.tap_q[:, 0, :], enc.tap_q, enc.tap_v, gt_ops)
        return logits, pred, enc

    __call__ = forward


def build_model(dataset: Dataset, config: TrainConfig, model_cfg: Optional[ModelConfig] = None,
                dec_cfg: Optional[DecoderConfig] = None, dtype=np.float32) -> VQAModel:
    model_cfg = model_cfg or ModelConfig()
    model_cfg = replace(model_cfg, tap=config.tap, answer_vocab_size=len(dataset.answers))
    dec_cfg = dec_cfg or DecoderConfig(d_hidden=model_cfg.d_hidden, n_ops=len(dataset.operations))
    vocab = TokenVocab(dataset.words)
    return VQAModel(model_cfg, dec_cfg, len(vocab), dataset.feature_dim, seed=config.seed, dtype=dtype)


def _slice(p: Prepared, idx: np.ndarray, dtype):
    sub = [p.samples[i] for i in idx]
    t = int(p.q_mask[idx].sum(axis=1).max())
    n = max(int(p.v_mask[idx].sum(axis=1).max()), 1)
    return (sub, p.ids[idx, :t], p.q_mask[idx, :t], p.feats[idx, :n].astype(dtype),
            p.boxes[idx, :n].astype(dtype), p.v_mask[idx, :n], p.answers[idx])


@dataclass
class Predictions:
    answers: list[str]
    programs: list[Program]
    v_scores: list[np.ndarray]
    v_targets: list[np.ndarray]
    q_scores: list[np.ndarray] = field(default_factory=list)


def predict(model: VQAModel, p: Prepared, answers: Sequence[str], batch_size: int = 256,
            programs: bool = True) -> Predictions:
    """Eval-mode answers, decoded programs and teacher-forced visual scores."""
    model.eval()
    dtype = model.encoder.dtype
    out = Predictions([], [], [], [])
    for start in range(0, len(p), batch_size):
        idx = np.arange(start, min(start + batch_size, len(p)))
        sub, ids, qm, fe, bx, vm, _ = _slice(p, idx, dtype)
        logits, _, enc = model(ids, qm, fe, bx, vm, with_program=False)
        out.answers.extend(answers[i] for i in np.argmax(logits.data, axis=-1))
        if not programs:
            continue
        cls_tap = enc.tap_q[:, 0, :]
        n_tok = [len(s.tokens) for s in sub]
        n_obj = [len(s.objects) for s in sub]
        out.programs.extend(model.decoder.predict(cls_tap, enc.tap_q, enc.tap_v, n_tok, n_obj))
        gt = program_batch(sub, ids.shape[1] - 1, fe.shape[1])
        pred = model.decoder(cls_tap, enc.tap_q, enc.tap_v, gt.ops)
        for k, s in enumerate(sub):
            n_ops = len(s.program.ops)
            out.v_scores.append(pred.a_v_scores.data[k, :n_ops, : n_obj[k]].astype(np.float64))
            out.v_targets.append(gt.a_v[k, :n_ops, : n_obj[k]])
            out.q_scores.append(pred.a_q_scores.data[k, :n_ops, : n_tok[k]].astype(np.float64))
    model.train()
    return out


def evaluate(model: VQAModel, p: Prepared, answers: Sequence[str], programs: bool = True,
             batch_size: int = 256) -> MetricsReport:
    pr = predict(model, p, answers, batch_size, programs)
    gts = [s.answer for s in p.samples]
    buckets = [s.bucket for s in p.samples]
    if not programs:
        return MetricsReport.build(pr.answers, gts, buckets)
    return MetricsReport.build(pr.answers, gts, buckets, pr.programs, [s.program for s in p.samples],
                               pr.v_scores, pr.v_targets)


# ---------------------------------------------------------------- training


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainResult:
    model: VQAModel
    metrics: list[dict]
    best_epoch: int
    steps: int
    optimizer: Adam
    final_state: dict


def _fmt(v: float) -> str:
    return repr(float(v))


def train_stage(config: TrainConfig, dataset: Dataset, init: Optional[VQAModel] = None,
                model_cfg: Optional[ModelConfig] = None, dec_cfg: Optional[DecoderConfig] = None,
                out_dir=None, eval_programs: bool = True, dtype=np.float32) -> TrainResult:
    """Train one stage on ``dataset``'s train split, validating every epoch.

    Deterministic given ``(config, dataset, init)``.  With ``out_dir`` the
    final and best-validation checkpoints and the metrics CSV are written.
    """
    model = init if init is not None else build_model(dataset, config, model_cfg, dec_cfg, dtype)
    dtype = model.encoder.dtype
    if model.encoder.obj_feat.weight.shape[0] != dataset.feature_dim:
        raise ValueError(f"model expects {model.encoder.obj_feat.weight.shape[0]}-d visual features, "
                         f"dataset provides {dataset.feature_dim}")
    mc = model.model_cfg
    vocab = TokenVocab(dataset.words)
    train = prepare(dataset.split("train"), vocab, dataset.answers, dataset.feature_dim,
                    mc.max_tokens, mc.max_objects)
    val = prepare(dataset.split("val"), vocab, dataset.answers, dataset.feature_dim,
                  mc.max_tokens, mc.max_objects)
    weights = config.weights()
    with_prog = config.program_supervision
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 0x7EA1])
    n = len(train)
    per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = per_epoch * config.epochs
    metrics: list[dict] = []
    best_acc, best_epoch, best_state = -1.0, -1, None
    step = 0
    model.train()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        swapped = None
        if config.random_program and with_prog:
            perm = np.random.default_rng([config.seed, epoch, 0xBAD]).permutation(n)
            swapped = [train.samples[j].program for j in perm]
        sums = {k: 0.0 for k in ("loss", "vqa", "op", "dep", "qarg", "varg")}
        correct = 0
        for b in range(per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            sub, ids, qm, fe, bx, vm, ans = _slice(train, idx, dtype)
            gt = None
            if with_prog:
                progs = [swapped[i] for i in idx] if swapped is not None else None
                gt = program_batch(sub, ids.shape[1] - 1, fe.shape[1], progs)
            lr = lr_schedule(step, total_steps, config)
            opt.zero_grad()
            with Tape() as tape:
                logits, pred, _ = model(ids, qm, fe, bx, vm, gt.ops if gt is not None else None, with_prog)
                loss, comps = total_loss(logits, ans, pred, gt, weights, qm[:, 1:], vm)
            value = float(loss.data)
            if not np.isfinite(value):
                snap = {"epoch": epoch, "step": step, "lr": lr,
                        **{k: float(v.data) for k, v in comps.items()}}
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} step {step}: {snap}", snap)
            tape.backward(loss)
            if config.grad_clip is not None:
                norm = np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum())
                                   for p in params if p.grad is not None))
                if norm > config.grad_clip:
                    for p in params:
                        if p.grad is not None:
                            p.grad = p.grad * (config.grad_clip / norm)
            opt.step(lr)
            step += 1
            sums["loss"] += value * len(idx)
            for k, v in comps.items():
                sums[k] += float(v.data) * len(idx)
            correct += int((np.argmax(logits.data, axis=-1) == ans).sum())
        for k, v in sums.items():
            if k == "loss" or k == "vqa" or with_prog:
                metrics.append(_row(config, epoch, "train", f"loss_{k}" if k != "loss" else "loss", v / n))
        metrics.append(_row(config, epoch, "train", "overall_acc", correct / n))
        rep = evaluate(model, val, dataset.answers, programs=eval_programs and with_prog)
        for k, v in rep.rates().items():
            metrics.append(_row(config, epoch, "val", k, v))
        log.info("stage %s epoch %d: val acc %.4f", config.stage, epoch, rep.overall_acc or 0.0)
        if config.keep_best and (rep.overall_acc or 0.0) > best_acc:
            best_acc, best_epoch = rep.overall_acc or 0.0, epoch
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
    final_state = {k: v.copy() for k, v in model.state_dict().items()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "final.psup", model, config, opt, step)
        write_metrics(out / "metrics.csv", metrics)
    if config.keep_best and best_state is not None:
        model.load_state_dict(best_state)
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "best.psup", model, config, None, step)
    return TrainResult(model, metrics, best_epoch, step, opt, final_state)


def _row(config: TrainConfig, epoch: int, split: str, metric: str, value: float) -> dict:
    return {"stage": config.stage, "epoch": epoch, "split": split, "metric": metric,
            "value": _fmt(value), "seed": config.seed}


def write_metrics(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in METRIC_FIELDS})


def metrics_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in METRIC_FIELDS})
    return buf.getvalue()


def run_oracle_transfer(oracle_ds: Dataset, noisy_ds: Dataset, pretrain: TrainConfig,
                        finetune: TrainConfig, model_cfg: Optional[ModelConfig] = None,
                        dec_cfg: Optional[DecoderConfig] = None, out_dir=None,
                        dtype=np.float32) -> tuple[TrainResult, TrainResult]:
    """Oracle pre-training on one-hot inputs, then fine-tuning on noisy features.

    Everything carries over except the visual feature projection, which is
    re-initialised because the two input spaces differ in meaning and width.
    """
    if oracle_ds.mode != "oracle" or noisy_ds.mode != "noisy":
        raise ValueError("transfer needs an oracle-mode and a noisy-mode dataset")
    if oracle_ds.seed != noisy_ds.seed or len(oracle_ds.samples) != len(noisy_ds.samples):
        raise ValueError("oracle and noisy datasets must come from the same scenes")
    if oracle_ds.words != noisy_ds.words or oracle_ds.answers != noisy_ds.answers:
        raise ValueError("oracle and noisy datasets disagree on vocabularies")
    if pretrain.tap != finetune.tap:
        raise ValueError("pretrain and finetune stages must share the decoder tap")
    sub = Path(out_dir) if out_dir is not None else None
    stage1 = train_stage(replace(pretrain, stage="oracle_pretrain", visual_mode="oracle"), oracle_ds,
                         None, model_cfg, dec_cfg, sub / "oracle" if sub else None, dtype=dtype)
    model = copy.deepcopy(stage1.model)
    model.encoder.reset_visual_projection(noisy_ds.feature_dim, seed=finetune.seed + 104729)
    stage3 = train_stage(replace(finetune, stage="finetune", visual_mode="noisy"), noisy_ds, model,
                         out_dir=sub / "finetune" if sub else None, dtype=dtype)
    return stage1, stage3


# ---------------------------------------------------------------- checkpoints


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    manifest: dict

    @property
    def config(self) -> dict:
        return self.manifest.get("config", {})

    def model_state(self) -> dict[str, np.ndarray]:
        return {k[len("model."):]: v for k, v in self.tensors.items() if k.startswith("model.")}


def save_checkpoint(path, model: VQAModel, config: Optional[TrainConfig] = None,
                    optimizer: Optional[Adam] = None, step: int = 0,
                    rng_state: Optional[dict] = None) -> Path:
    tensors = {f"model.{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        tensors.update({f"optim.{k}": v for k, v in optimizer.state_arrays().items()})
    cfg = {"model": model.model_cfg.to_dict(), "decoder": model.dec_cfg.to_dict(),
           "feature_dim": int(model.encoder.obj_feat.weight.shape[0]),
           "n_words": int(model.encoder.word_emb.shape[0])}
    if config is not None:
        cfg["train"] = config.to_dict()
    extra = {"step": int(step), "rng_state": rng_state,
             "optimizer_t": optimizer.state.t if optimizer is not None else None}
    return write_checkpoint(path, tensors, cfg, extra)


def write_checkpoint(path, tensors: dict[str, np.ndarray], config: dict, extra: Optional[dict] = None) -> Path:
    entries, blobs, offset = {}, [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype.kind != "f":
            raise CheckpointError(f"tensor {name} is not floating point")
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries[name] = {"dtype": le.dtype.str, "shape": list(arr.shape), "offset": offset,
                         "length": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    manifest = {"tensors": entries, "config": config, **(extra or {})}
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    return path


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", data[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack("<Q", data[8:16])
    if 16 + mlen > len(data):
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[16:16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from exc
    body = data[16 + mlen:]
    tensors = {}
    end = 0
    for name, e in manifest["tensors"].items():
        dt = np.dtype(e["dtype"])
        want = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
        if want != e["length"]:
            raise CheckpointError(f"{path}: tensor {name} declares {e['length']} bytes, shape needs {want}")
        lo, hi = e["offset"], e["offset"] + e["length"]
        if hi > len(body):
            raise CheckpointError(f"{path}: truncated blob for tensor {name}")
        arr = np.frombuffer(body[lo:hi], dtype=dt).reshape(e["shape"])
        tensors[name] = arr.astype(dt.newbyteorder("="), copy=True)
        end = max(end, hi)
    if end != len(body):
        raise CheckpointError(f"{path}: {len(body) - end} trailing bytes after the last tensor")
    return Checkpoint(tensors, manifest)


def model_from_checkpoint(ck: Checkpoint, dtype=None) -> VQAModel:
    cfg = ck.config
    mc = ModelConfig(**cfg["model"])
    dc = DecoderConfig(**cfg["decoder"])
    state = ck.model_state()
    dt = dtype or next(iter(state.values())).dtype
    model = VQAModel(mc, dc, cfg["n_words"], cfg["feature_dim"], seed=0, dtype=dt)
    model.load_state_dict(state)
    return model
