"""Corpus generation, head/tail and train/val/test splits, dataset files."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..program import Box, DESK_OPERATIONS, Program, iou, program_from_dict, program_to_dict
from .noise import Detection, NoiseConfig, apply_presence_shift, embed_objects, ground_truth_detections
from .templates import TEMPLATES, Rejected, answer_vocabulary, realize_question, word_vocabulary
from .world import SceneConfig, SceneGraph, gen_scene

FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    n_samples: int = 25000
    questions_per_scene: int = 5
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    oracle_dim: int = 24
    noisy_dim: int = 32
    tail_fraction: float = 0.2
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_tries: int = 40

    def feature_dim(self, mode: str) -> int:
        return self.oracle_dim if mode == "oracle" else self.noisy_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scene"]["classes"] = list(self.scene.classes)
        d["scene"]["colors"] = list(self.scene.colors)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        scene = dict(d.pop("scene", {}))
        for k in ("classes", "colors"):
            if k in scene:
                scene[k] = tuple(scene[k])
        noise = d.pop("noise", {})
        if "split_fractions" in d:
            d["split_fractions"] = tuple(d["split_fractions"])
        return cls(scene=SceneConfig(**scene), noise=NoiseConfig(**noise), **d)


@dataclass
class Sample:
    sample_id: int
    scene: SceneGraph
    tokens: list[str]
    template: str
    objects: list[Detection]
    features: np.ndarray
    program: Program
    answer: str
    group_key: str
    split: str = "train"
    bucket: str = "head"
    unanswerable_evidence: bool = False

    @property
    def boxes(self) -> list[Box]:
        return [d.box for d in self.objects]

    def to_json(self) -> str:
        return json.dumps({
            "id": self.sample_id,
            "scene": self.scene.to_dict(),
            "tokens": self.tokens,
            "template": self.template,
            "objects": [d.to_dict() for d in self.objects],
            "features": self.features.tolist(),
            "program": program_to_dict(self.program),
            "answer": self.answer,
            "group_key": self.group_key,
            "split": self.split,
            "bucket": self.bucket,
            "unanswerable_evidence": self.unanswerable_evidence,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Sample":
        d = json.loads(line)
        feats = np.asarray(d["features"], dtype=np.float64)
        objects = [Detection.from_dict(o) for o in d["objects"]]
        if feats.size == 0:
            feats = feats.reshape(len(objects), -1) if objects else np.zeros((0, 0))
        return cls(int(d["id"]), SceneGraph.from_dict(d["scene"]), list(d["tokens"]), d["template"],
                   objects, feats, program_from_dict(d["program"]), d["answer"], d["group_key"],
                   d["split"], d["bucket"], bool(d["unanswerable_evidence"]))


@dataclass
class Dataset:
    samples: list[Sample]
    mode: str
    seed: int
    config: WorldConfig
    words: list[str] = field(default_factory=word_vocabulary)
    answers: list[str] = field(default_factory=answer_vocabulary)
    operations: list[str] = field(default_factory=lambda: list(DESK_OPERATIONS))

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim(self.mode)

    def split(self, name: str) -> list[Sample]:
        return [s for s in self.samples if s.split == name]

    def manifest(self) -> dict:
        counts = Counter(s.split for s in self.samples)
        return {
            "format_version": FORMAT_VERSION,
            "mode": self.mode,
            "seed": self.seed,
            "counts": {"total": len(self.samples), **{k: counts.get(k, 0) for k in ("train", "val", "test")}},
            "feature_dim": self.feature_dim,
            "config": self.config.to_dict(),
            "words": self.words,
            "answers": self.answers,
            "operations": self.operations,
        }


def _derive(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


def _evidence_missing(program: Program, detections: Sequence[Detection]) -> bool:
    for op in program.ops:
        for ref in op.v_args:
            if ref.box is not None and not any(iou(ref.box, d.box) > 0.0 for d in detections):
                return True
    return False


def generate_corpus(seed: int, config: WorldConfig = WorldConfig(), mode: str = "noisy",
                    n_samples: Optional[int] = None) -> Dataset:
    """Generate a split-tagged corpus; a pure function of ``(seed, config, mode)``.

    Scenes, questions and detections do not depend on ``mode``, so the oracle
    and noisy corpora for one seed describe the same questions on the same
    scenes and differ only in their visual inputs.
    """
    if mode not in ("oracle", "noisy"):
        raise ValueError(f"mode must be 'oracle' or 'noisy', got {mode!r}")
    n_total = config.n_samples if n_samples is None else n_samples
    dim = config.feature_dim(mode)
    samples: list[Sample] = []
    scene_idx = 0
    while len(samples) < n_total:
        scene = gen_scene(_derive(seed, scene_idx, 11), config.scene, scene_id=scene_idx)
        if mode == "oracle":
            objects = ground_truth_detections(scene)
        else:
            objects = apply_presence_shift(scene, config.noise, _derive(seed, scene_idx, 13),
                                           config.scene.max_objects)
        feats = embed_objects(objects, mode, dim, dataset_seed=seed, feat_noise=config.noise.feat_noise)
        detected_shift = apply_presence_shift(scene, config.noise, _derive(seed, scene_idx, 13),
                                              config.scene.max_objects) if mode == "oracle" else objects
        for q in range(config.questions_per_scene):
            if len(samples) >= n_total or not scene.objects:
                break
            rng = np.random.default_rng(_derive(seed, scene_idx, q, 17))
            real = None
            for _ in range(config.max_tries):
                template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
                try:
                    real = realize_question(template, scene, rng)
                    break
                except Rejected:
                    continue
            if real is None:
                continue
            samples.append(Sample(
                sample_id=len(samples), scene=scene, tokens=real.tokens, template=template.name,
                objects=objects, features=feats, program=real.program, answer=real.answer,
                group_key=real.context,
                unanswerable_evidence=_evidence_missing(real.program, detected_shift)))
        scene_idx += 1
    samples = make_splits(samples, config.tail_fraction, seed, config.split_fractions)
    return Dataset(samples, mode, seed, config)


def tail_answers(answers: Sequence[str], tail_fraction: float) -> set[str]:
    """Least frequent answers covering at most ``tail_fraction`` of the mass."""
    counts = Counter(answers)
    total = sum(counts.values())
    tail, acc = set(), 0
    # rarest first; ties broken by answer text for determinism
    for ans, c in sorted(counts.items(), key=lambda kv: (kv[1], kv[0])):
        if acc + c > tail_fraction * total:
            break
        acc += c
        tail.add(ans)
    return tail


def make_splits(samples: Sequence[Sample], tail_fraction: float = 0.2, seed: int = 0,
                fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> list[Sample]:
    """Tag head/tail per group and partition train/val/test by scene."""
    by_group: dict[str, list[str]] = defaultdict(list)
    for s in samples:
        by_group[s.group_key].append(s.answer)
    tails = {g: tail_answers(a, tail_fraction) for g, a in by_group.items()}
    scenes = sorted({s.scene.scene_id for s in samples})
    order = np.random.default_rng(_derive(seed, 23)).permutation(len(scenes))
    n_train = int(round(fractions[0] * len(scenes)))
    n_val = int(round(fractions[1] * len(scenes)))
    part = {}
    for rank, k in enumerate(order):
        part[scenes[k]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return [replace(s, split=part[s.scene.scene_id],
                    bucket="tail" if s.answer in tails[s.group_key] else "head")
            for s in samples]


# ---------------------------------------------------------------- files


def write_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "samples.jsonl", "w", encoding="utf-8") as fh:
        for s in ds.samples:
            fh.write(s.to_json())
            fh.write("\n")
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(ds.manifest(), fh, indent=1)
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read manifest in {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format {manifest.get('format_version')}")
    samples = []
    with open(path / "samples.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(Sample.from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"samples.jsonl line {lineno}: schema error ({exc})") from exc
    expected = manifest["counts"]["total"]
    if len(samples) != expected:
        raise DatasetError(f"manifest announces {expected} samples, samples.jsonl holds {len(samples)} "
                           f"(file truncated after line {len(samples)}?)")
    config = WorldConfig.from_dict(manifest["config"])
    return Dataset(samples, manifest["mode"], int(manifest["seed"]), config,
                   list(manifest["words"]), list(manifest["answers"]), list(manifest["operations"]))
