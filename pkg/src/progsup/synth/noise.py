"""Detector-style corruption of scenes: presence and appearance shifts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..program import Box
from .world import CLASSES, COLORS, SIZES, SceneGraph


@dataclass(frozen=True)
class NoiseConfig:
    p_miss: float = 0.15
    p_dup: float = 0.10
    p_spur: float = 0.10
    box_jitter: float = 0.02
    feat_noise: float = 0.25

    def __post_init__(self):
        for name in ("p_miss", "p_dup", "p_spur"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("box_jitter", "feat_noise"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Detection:
    box: Box
    cls: str
    color: str
    size: str
    feature_seed: int
    source: int          # scene obj_id, or -1 for a spurious detection

    def to_dict(self) -> dict:
        return {"box": self.box.as_list(), "class": self.cls, "color": self.color,
                "size": self.size, "feature_seed": self.feature_seed, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(Box(*d["box"]), d["class"], d["color"], d["size"], int(d["feature_seed"]),
                   int(d["source"]))


def _jitter(box: Box, std: float, rng: np.random.Generator) -> Box:
    if std <= 0.0:
        return box
    c = np.clip(np.array(box.as_list()) + rng.normal(0.0, std, size=4), 0.0, 1.0)
    x1, x2 = sorted((float(c[0]), float(c[2])))
    y1, y2 = sorted((float(c[1]), float(c[3])))
    return Box(x1, y1, x2, y2)


def ground_truth_detections(scene: SceneGraph) -> list[Detection]:
    return [Detection(o.box, o.cls, o.color, o.size, o.feature_seed, o.obj_id) for o in scene.objects]


def apply_presence_shift(scene: SceneGraph, noise: NoiseConfig, seed: int,
                         max_objects: int = 8) -> list[Detection]:
    """Drop, duplicate and hallucinate objects, then shuffle.

    Kept and duplicated detections get jittered boxes.  One spurious object
    may appear per scene slot (``max_objects`` slots) with probability
    ``p_spur``; it has uniformly random attributes and box.
    """
    rng = np.random.default_rng(seed)
    out: list[Detection] = []
    for o in scene.objects:
        if rng.random() < noise.p_miss:
            continue
        out.append(Detection(_jitter(o.box, noise.box_jitter, rng), o.cls, o.color, o.size,
                             o.feature_seed, o.obj_id))
        if rng.random() < noise.p_dup:
            out.append(Detection(_jitter(o.box, noise.box_jitter, rng), o.cls, o.color, o.size,
                                 o.feature_seed + 1, o.obj_id))
    for _ in range(max_objects):
        if rng.random() < noise.p_spur:
            w, h = rng.uniform(0.1, 0.35, size=2)
            x1, y1 = rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h)
            out.append(Detection(Box(float(x1), float(y1), float(x1 + w), float(y1 + h)),
                                 CLASSES[int(rng.integers(len(CLASSES)))],
                                 COLORS[int(rng.integers(len(COLORS)))],
                                 SIZES[int(rng.integers(len(SIZES)))],
                                 int(rng.integers(0, 2**31 - 1)), -1))
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def one_hot_width() -> int:
    return len(CLASSES) + len(COLORS) + len(SIZES)


def _one_hot(d: Detection) -> np.ndarray:
    v = np.zeros(one_hot_width())
    v[CLASSES.index(d.cls)] = 1.0
    v[len(CLASSES) + COLORS.index(d.color)] = 1.0
    v[len(CLASSES) + len(COLORS) + SIZES.index(d.size)] = 1.0
    return v


def appearance_map(dim: int, dataset_seed: int) -> np.ndarray:
    """The fixed random linear map from one-hot attributes to noisy features."""
    rng = np.random.default_rng([dataset_seed, 0xFEA7])
    return rng.normal(0.0, 1.0 / np.sqrt(dim), size=(one_hot_width(), dim))


def embed_objects(objects: Sequence[Detection], mode: str, dim: int, dataset_seed: int = 0,
                  feat_noise: float = 0.25) -> np.ndarray:
    """Feature matrix ``[n_objects, dim]``.

    ``oracle``: exact one-hot (class, colour, size), zero padded.
    ``noisy``: shared random linear map of the one-hot plus per-object
    Gaussian noise seeded by the object's ``feature_seed``.
    """
    width = one_hot_width()
    if mode == "oracle":
        if dim < width:
            raise ValueError(f"oracle features need dim >= {width}, got {dim}")
        out = np.zeros((len(objects), dim))
        for i, d in enumerate(objects):
            out[i, :width] = _one_hot(d)
        return out
    if mode == "noisy":
        proj = appearance_map(dim, dataset_seed)
        out = np.zeros((len(objects), dim))
        for i, d in enumerate(objects):
            out[i] = _one_hot(d) @ proj
            if feat_noise > 0.0:
                out[i] += np.random.default_rng(d.feature_seed).normal(0.0, feat_noise, size=dim)
        return out
    raise ValueError(f"unknown embedding mode {mode!r}")
