"""Reasoning programs: operations with question, visual and dependency arguments.

A program is a list of operations where each operation may point at question
tokens, at visual objects (carrying boxes) and at the results of earlier
operations.  This module validates programs, converts them to and from JSON,
builds the dense argument targets used for supervision and ingests
GQA-style ``semantic`` annotations.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

STOP = "STOP"
DEFAULT_MAX_OPS = 9
AUC_IOU_THRESHOLD = 2.0 / 3.0

# Index 0 is STOP.  The rest follow the executor in synth.executor.
DESK_OPERATIONS: tuple[str, ...] = (
    STOP,
    "select",
    "filter_color",
    "filter_size",
    "relate_left",
    "relate_right",
    "relate_above",
    "relate_below",
    "exist",
    "verify_color",
    "verify_size",
    "verify_name",
    "query_color",
    "query_size",
    "query_name",
    "and",
    "or",
    "choose_color",
    "choose_size",
    "choose_name",
    "same_color",
    "same_size",
    "different_color",
    "different_size",
)


class ProgramParseError(ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class GqaIngestError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def features(self) -> list[float]:
        """The 7-vector ``[x1, y1, x2, y2, w, h, area]``."""
        w, h = self.x2 - self.x1, self.y2 - self.y1
        return [self.x1, self.y1, self.x2, self.y2, w, h, w * h]


def iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


class OperationVocab:
    def __init__(self, labels: Sequence[str] = DESK_OPERATIONS):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise ValueError("operation labels must be unique")
        if STOP not in labels:
            raise ValueError("operation vocabulary needs a STOP label")
        self.labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        return self._index[label]

    @property
    def stop_index(self) -> int:
        return self._index[STOP]

    def __eq__(self, other) -> bool:
        return isinstance(other, OperationVocab) and self.labels == other.labels


DESK_VOCAB = OperationVocab()


@dataclass(frozen=True)
class VisualRef:
    obj: int
    box: Optional[Box]


@dataclass(frozen=True)
class ProgramOp:
    op: str
    q_args: tuple[int, ...] = ()
    v_args: tuple[VisualRef, ...] = ()
    dep_args: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "q_args", tuple(sorted(set(self.q_args))))
        object.__setattr__(self, "dep_args", tuple(sorted(set(self.dep_args))))
        object.__setattr__(self, "v_args", tuple(sorted(set(self.v_args),
                                                       key=lambda r: (r.obj, _box_key(r.box)))))


def _box_key(box: Optional[Box]):
    return () if box is None else tuple(box.as_list())


@dataclass(frozen=True)
class Program:
    ops: tuple[ProgramOp, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    @property
    def labels(self) -> list[str]:
        return [o.op for o in self.ops]

    def roots(self) -> list[int]:
        used = {j for o in self.ops for j in o.dep_args}
        return [i for i in range(len(self.ops)) if i not in used]


@dataclass
class ArgTargets:
    a_q: np.ndarray
    a_v: np.ndarray
    a_d: np.ndarray


def validate_program(p: Program, vocab: OperationVocab = DESK_VOCAB,
                     n_tokens: Optional[int] = None, n_objects: Optional[int] = None,
                     max_ops: int = DEFAULT_MAX_OPS, require_single_root: bool = True) -> list[str]:
    """Every invariant violation in ``p``; an empty list means valid.

    ``require_single_root`` applies to ground-truth programs; decoded
    predictions may legitimately leave several unused results.
    """
    problems: list[str] = []
    if len(p.ops) > max_ops:
        problems.append(f"length: {len(p.ops)} operations exceeds maximum {max_ops}")
    for i, op in enumerate(p.ops):
        if op.op not in vocab:
            problems.append(f"op {i}: unknown operation label {op.op!r}")
        elif op.op == STOP:
            problems.append(f"op {i}: STOP is implicit and may not appear in the body")
        for j in op.dep_args:
            if j >= i:
                problems.append(f"op {i}: forward dependency on op {j}")
            elif j < 0:
                problems.append(f"op {i}: negative dependency index {j}")
        for t in op.q_args:
            if t < 0 or (n_tokens is not None and t >= n_tokens):
                problems.append(f"op {i}: question argument {t} out of range")
        for ref in op.v_args:
            if ref.obj < 0 or (n_objects is not None and ref.obj >= n_objects):
                problems.append(f"op {i}: visual argument {ref.obj} out of range")
    if require_single_root and p.ops:
        roots = p.roots()
        if len(roots) != 1:
            problems.append(f"root: expected exactly one root, found {len(roots)}")
    return problems


# ---------------------------------------------------------------- targets


def build_soft_visual_targets(program: Program, detected_boxes: Sequence[Box]) -> np.ndarray:
    """IoU soft targets: per detection, the best overlap with the op's GT boxes."""
    a_v = np.zeros((len(program.ops), len(detected_boxes)))
    for i, op in enumerate(program.ops):
        gt = [r.box for r in op.v_args if r.box is not None]
        if not gt:
            continue
        for j, det in enumerate(detected_boxes):
            a_v[i, j] = max(iou(det, g) for g in gt)
    return a_v


def binarize_targets(a_v: np.ndarray, threshold: float = AUC_IOU_THRESHOLD) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(a_v) >= threshold).astype(np.int8)


def build_arg_targets(program: Program, n_tokens: int, detected_boxes: Sequence[Box],
                      max_ops: int = DEFAULT_MAX_OPS) -> ArgTargets:
    n = len(program.ops)
    a_q = np.zeros((n, n_tokens))
    a_d = np.zeros((n, max_ops))
    for i, op in enumerate(program.ops):
        for t in op.q_args:
            if t < n_tokens:
                a_q[i, t] = 1.0
        for j in op.dep_args:
            a_d[i, j] = 1.0
    return ArgTargets(a_q, build_soft_visual_targets(program, detected_boxes), a_d)


# ---------------------------------------------------------------- JSON


def program_to_dict(p: Program) -> dict:
    return {"ops": [
        {
            "op": o.op,
            "q_args": list(o.q_args),
            "v_args": [{"box": None if r.box is None else r.box.as_list(), "obj": r.obj}
                       for r in o.v_args],
            "dep_args": list(o.dep_args),
        }
        for o in p.ops
    ]}


def program_from_dict(d, vocab: OperationVocab = DESK_VOCAB) -> Program:
    if not isinstance(d, dict) or not isinstance(d.get("ops"), list):
        raise ProgramParseError("program must be an object with an 'ops' list")
    ops = []
    for i, raw in enumerate(d["ops"]):
        try:
            label = raw["op"]
            if label not in vocab:
                raise ProgramParseError(f"op {i}: unknown operation label {label!r}")
            v_args = []
            for ref in raw.get("v_args", []):
                box = ref.get("box")
                v_args.append(VisualRef(int(ref["obj"]), None if box is None else Box(*map(float, box))))
            ops.append(ProgramOp(label, tuple(int(t) for t in raw.get("q_args", [])),
                                 tuple(v_args), tuple(int(j) for j in raw.get("dep_args", []))))
        except ProgramParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ProgramParseError(f"op {i}: malformed operation ({exc})") from exc
    return Program(tuple(ops))


def serialize(p: Program) -> str:
    return json.dumps(program_to_dict(p), separators=(",", ":"))


def deserialize(text: str, vocab: OperationVocab = DESK_VOCAB) -> Program:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramParseError(f"malformed program JSON: {exc.msg}", exc.pos) from exc
    return program_from_dict(d, vocab)


def format_tree(p: Program, tokens: Optional[Sequence[str]] = None) -> str:
    """Indented tree rendering, root first, dependencies nested below."""
    if not p.ops:
        return "(empty program)"
    lines: list[str] = []

    def describe(i: int) -> str:
        op = p.ops[i]
        parts = [f"[{i}] {op.op}"]
        if op.q_args:
            words = [tokens[t] if tokens is not None and t < len(tokens) else str(t) for t in op.q_args]
            parts.append("q=" + ",".join(words))
        if op.v_args:
            parts.append("v=" + ",".join(f"obj{r.obj}" for r in op.v_args))
        return " ".join(parts)

    def walk(i: int, depth: int) -> None:
        lines.append("  " * depth + describe(i))
        for j in reversed(p.ops[i].dep_args):
            walk(j, depth + 1)

    for root in p.roots():
        walk(root, 0)
    return "\n".join(lines)


# ---------------------------------------------------------------- GQA ingestion

DEFAULT_GQA_LABEL_MAP: dict[str, str] = {
    "select": "select",
    "filter color": "filter_color",
    "filter size": "filter_size",
    "relate to the left of": "relate_left",
    "relate to the right of": "relate_right",
    "relate above": "relate_above",
    "relate below": "relate_below",
    "exist": "exist",
    "verify color": "verify_color",
    "verify size": "verify_size",
    "verify name": "verify_name",
    "query color": "query_color",
    "query size": "query_size",
    "query name": "query_name",
    "and": "and",
    "or": "or",
    "choose color": "choose_color",
    "choose size": "choose_size",
    "choose name": "choose_name",
    "same color": "same_color",
    "same size": "same_size",
    "different color": "different_color",
    "different size": "different_size",
}

_OBJ_ID = re.compile(r"\(([^()]*)\)")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _find_span(tokens: Sequence[str], words: Sequence[str]) -> Optional[list[int]]:
    n = len(words)
    if n == 0:
        return None
    for start in range(len(tokens) - n + 1):
        if list(tokens[start:start + n]) == list(words):
            return list(range(start, start + n))
    return None


def _argument_parts(operation: str, argument: str) -> tuple[str, list[str], list[int]]:
    """Split a GQA argument into (lookup key suffix, word phrases, object ids)."""
    ids: list[int] = []
    for group in _OBJ_ID.findall(argument):
        for piece in group.split(","):
            piece = piece.strip()
            if piece.isdigit():
                ids.append(int(piece))
    plain = _OBJ_ID.sub("", argument).strip()
    fields = [f.strip() for f in plain.split(",")]
    suffix = ""
    phrases: list[str] = []
    if operation == "relate" and len(fields) >= 2:
        # "name,relation,s|o"
        suffix = fields[1]
        phrases = [fields[0], fields[1]]
    elif operation == "query":
        suffix = fields[0]
    else:
        for f in fields:
            phrases.extend(p.strip() for p in f.split("|"))
    phrases = [p for p in phrases if p and p not in {"?", "-", "s", "o", "_"}]
    return suffix, phrases, ids


def parse_gqa_json(text: str, label_map: Optional[Mapping[str, str]] = None,
                   vocab: OperationVocab = DESK_VOCAB, question: Optional[str] = None) -> Program:
    """Build a Program from a GQA ``semantic`` step list.

    ``text`` holds either the bare list of steps or a record object with
    ``semantic``, optional ``question`` and optional ``objects`` (object id
    -> ``{"box": [x1, y1, x2, y2]}``, normalised).  Word arguments that do not
    occur verbatim in the question are dropped with a warning.
    """
    label_map = dict(DEFAULT_GQA_LABEL_MAP if label_map is None else label_map)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramParseError(f"malformed GQA JSON: {exc.msg}", exc.pos) from exc
    objects: Mapping = {}
    if isinstance(data, dict):
        question = data.get("question", question)
        objects = data.get("objects", {}) or {}
        steps = data.get("semantic")
    else:
        steps = data
    if not isinstance(steps, list):
        raise GqaIngestError("GQA record needs a 'semantic' list of steps")
    tokens = tokenize(question) if question else []

    ops: list[ProgramOp] = []
    unmapped: list[str] = []
    for i, step in enumerate(steps):
        if not isinstance(step, dict) or "operation" not in step:
            raise GqaIngestError(f"step {i}: malformed step, needs an 'operation' field")
        operation = str(step["operation"]).strip()
        argument = str(step.get("argument", ""))
        deps = step.get("dependencies", [])
        if not isinstance(deps, list) or not all(isinstance(j, int) for j in deps):
            raise GqaIngestError(f"step {i}: dependencies must be a list of integers")
        for j in deps:
            if j >= len(steps) or j < 0:
                raise GqaIngestError(f"step {i}: dependency {j} points past the step list")
            if j >= i:
                raise GqaIngestError(f"step {i}: forward dependency on step {j}")
        suffix, phrases, ids = _argument_parts(operation, argument)
        label = label_map.get(operation)
        if label is None and suffix:
            label = label_map.get(f"{operation} {suffix}")
        if label is None or label not in vocab:
            unmapped.append(operation if not suffix else f"{operation} {suffix}")
            continue
        q_args: list[int] = []
        for phrase in phrases:
            span = _find_span(tokens, tokenize(phrase))
            if span is None:
                log.warning("step %d: argument %r not found in question; dropped", i, phrase)
            else:
                q_args.extend(span)
        v_args = []
        for obj in ids:
            raw = objects.get(str(obj), objects.get(obj)) if objects else None
            box = Box(*map(float, raw["box"])) if raw and raw.get("box") is not None else None
            v_args.append(VisualRef(obj, box))
        ops.append(ProgramOp(label, tuple(q_args), tuple(v_args), tuple(deps)))
    if unmapped:
        raise GqaIngestError("unmapped GQA operations: " + ", ".join(sorted(set(unmapped))))
    return Program(tuple(ops))


def load_gqa_fixture(text: str, **kwargs) -> dict[str, Program]:
    """Parse a GQA questions file ``{question_id: record}``."""
    data = json.loads(text)
    return {qid: parse_gqa_json(json.dumps(rec), **kwargs) for qid, rec in data.items()}


def chain(labels: Iterable[str]) -> Program:
    """A bare chain program where each op depends on its predecessor."""
    return Program(tuple(ProgramOp(lab, dep_args=(i - 1,) if i else ())
                         for i, lab in enumerate(labels)))
