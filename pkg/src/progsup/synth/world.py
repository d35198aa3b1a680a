"""Scene graphs for the synthetic world."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..program import Box, iou

CLASSES: tuple[str, ...] = (
    "boat", "flag", "car", "dog", "tree", "cup",
    "chair", "horse", "bird", "cat", "motorbike", "plane",
)
COLORS: tuple[str, ...] = ("white", "red", "blue", "green", "yellow", "black", "brown", "gray")
SIZES: tuple[str, ...] = ("small", "large")
RELATIONS: tuple[str, ...] = ("left", "right", "above", "below")
RELATION_PHRASES: dict[str, str] = {
    "left": "to the left of",
    "right": "to the right of",
    "above": "above",
    "below": "below",
}
RELATION_MARGIN = 0.05


@dataclass(frozen=True)
class SceneObject:
    obj_id: int
    cls: str
    color: str
    size: str
    box: Box
    feature_seed: int

    def to_dict(self) -> dict:
        return {"obj_id": self.obj_id, "class": self.cls, "color": self.color, "size": self.size,
                "box": self.box.as_list(), "feature_seed": self.feature_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        return cls(int(d["obj_id"]), d["class"], d["color"], d["size"], Box(*d["box"]),
                   int(d["feature_seed"]))


def related(rel: str, a: Box, b: Box, margin: float = RELATION_MARGIN) -> bool:
    """Whether ``a`` stands in relation ``rel`` to ``b`` (image y grows downward)."""
    (ax, ay), (bx, by) = a.center, b.center
    if rel == "left":
        return ax < bx - margin
    if rel == "right":
        return ax > bx + margin
    if rel == "above":
        return ay < by - margin
    if rel == "below":
        return ay > by + margin
    raise ValueError(f"unknown relation {rel!r}")


@dataclass(frozen=True)
class SceneGraph:
    scene_id: int
    objects: tuple[SceneObject, ...]

    def relations(self) -> set[tuple[str, int, int]]:
        out = set()
        for a in self.objects:
            for b in self.objects:
                if a.obj_id == b.obj_id:
                    continue
                for rel in RELATIONS:
                    if related(rel, a.box, b.box):
                        out.add((rel, a.obj_id, b.obj_id))
        return out

    def to_dict(self) -> dict:
        return {"scene_id": self.scene_id, "objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGraph":
        return cls(int(d["scene_id"]), tuple(SceneObject.from_dict(o) for o in d["objects"]))


@dataclass(frozen=True)
class SceneConfig:
    min_objects: int = 3
    max_objects: int = 8
    zipf: float = 1.2
    min_side: float = 0.1
    max_side: float = 0.35
    max_overlap: float = 0.3
    classes: tuple[str, ...] = CLASSES
    colors: tuple[str, ...] = COLORS
    # fixed seed for the class-conditional attribute priors
    prior_seed: int = 7


def zipf_weights(n: int, skew: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** skew
    return w / w.sum()


@dataclass(frozen=True)
class AttributePriors:
    class_probs: np.ndarray
    color_probs: np.ndarray      # [n_classes, n_colors]
    large_prob: np.ndarray       # [n_classes]


def attribute_priors(config: SceneConfig) -> AttributePriors:
    """Zipf class prior plus a class-conditional Zipf colour prior.

    Each class ranks the colours in its own fixed order, so every
    "what colour is the <class>" context has a head answer and a tail.
    """
    rng = np.random.default_rng(config.prior_seed)
    nc, nk = len(config.classes), len(config.colors)
    base = zipf_weights(nk, config.zipf)
    color = np.stack([base[np.argsort(rng.permutation(nk))] for _ in range(nc)])
    large = np.where(np.arange(nc) % 2 == 0, 0.75, 0.25)
    return AttributePriors(zipf_weights(nc, config.zipf), color, large)


def gen_scene(seed: int, config: SceneConfig = SceneConfig(), scene_id: Optional[int] = None) -> SceneGraph:
    rng = np.random.default_rng(seed)
    priors = attribute_priors(config)
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    boxes: list[Box] = []
    objects: list[SceneObject] = []
    for k in range(n):
        box = None
        for _ in range(50):
            w, h = rng.uniform(config.min_side, config.max_side, size=2)
            x1, y1 = rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h)
            cand = Box(float(x1), float(y1), float(x1 + w), float(y1 + h))
            if all(iou(cand, b) <= config.max_overlap for b in boxes):
                box = cand
                break
        if box is None:
            break
        boxes.append(box)
        ci = int(rng.choice(len(config.classes), p=priors.class_probs))
        col = int(rng.choice(len(config.colors), p=priors.color_probs[ci]))
        size = SIZES[1] if rng.random() < priors.large_prob[ci] else SIZES[0]
        objects.append(SceneObject(k, config.classes[ci], config.colors[col], size, box,
                                   int(rng.integers(0, 2**31 - 1))))
    return SceneGraph(seed if scene_id is None else scene_id, tuple(objects))
