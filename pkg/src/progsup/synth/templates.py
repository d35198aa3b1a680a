"""Question templates with exact token-to-operation alignment.

A template is a token pattern plus an operation list.  Pattern items are
either literal words or ``{SLOT}`` placeholders; each operation names the
pattern positions (by slot or by literal word) that form its question
arguments.  Slot values are drawn from the scene so most realisations are
answerable; the executor then decides the answer and the generator rejects
anything ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..program import Program, ProgramOp, VisualRef
from .executor import ExecutionError, execute_trace
from .world import CLASSES, COLORS, RELATION_PHRASES, RELATIONS, SIZES, SceneGraph


@dataclass(frozen=True)
class OpSpec:
    label: str           # may contain "{R}" for the relation slot
    args: tuple[str, ...]  # slot names or "=word" literals
    deps: tuple[int, ...] = ()


@dataclass(frozen=True)
class Template:
    tid: int
    name: str
    pattern: tuple[str, ...]
    ops: tuple[OpSpec, ...]
    # slot whose value names the question's context for head/tail grouping
    context_slot: Optional[str] = "A"


def _t(tid, name, text, ops, context="A") -> Template:
    return Template(tid, name, tuple(text.split()), tuple(OpSpec(*o) for o in ops), context)


TEMPLATES: tuple[Template, ...] = (
    _t(0, "exist", "is there a {A} ?",
       [("select", ("A",)), ("exist", ("=there",), (0,))]),
    _t(1, "exist_color", "is there a {C} {A} ?",
       [("select", ("A",)), ("filter_color", ("C",), (0,)), ("exist", ("=there",), (1,))]),
    _t(2, "or", "is there a {A} or a {B} ?",
       [("select", ("A",)), ("exist", (), (0,)), ("select", ("B",)), ("exist", (), (2,)),
        ("or", ("=or",), (1, 3))]),
    _t(3, "and", "is there a {A} and a {B} ?",
       [("select", ("A",)), ("exist", (), (0,)), ("select", ("B",)), ("exist", (), (2,)),
        ("and", ("=and",), (1, 3))]),
    _t(4, "query_color", "what color is the {A} ?",
       [("select", ("A",)), ("query_color", ("=color",), (0,))]),
    _t(5, "query_size", "what size is the {A} ?",
       [("select", ("A",)), ("query_size", ("=size",), (0,))]),
    _t(6, "query_name_rel", "what is the object {R} the {B} ?",
       [("select", ("=object",)), ("relate_{R}", ("R", "B"), (0,)), ("query_name", ("=what",), (1,))],
       context="B"),
    _t(7, "query_color_rel", "what color is the {A} {R} the {B} ?",
       [("select", ("A",)), ("relate_{R}", ("R", "B"), (0,)), ("query_color", ("=color",), (1,))]),
    _t(8, "choose_size_rel", "does the {A} {R} the {B} look {S1} or {S2} ?",
       [("select", ("A",)), ("relate_{R}", ("R", "B"), (0,)), ("choose_size", ("S1", "S2"), (1,))]),
    _t(9, "choose_color", "is the {A} {C1} or {C2} ?",
       [("select", ("A",)), ("choose_color", ("C1", "C2"), (0,))]),
    _t(10, "verify_color", "is the {A} {C} ?",
       [("select", ("A",)), ("verify_color", ("C",), (0,))]),
    _t(11, "verify_size", "is the {A} {S} ?",
       [("select", ("A",)), ("verify_size", ("S",), (0,))]),
    _t(12, "size_query_color", "what color is the {S} {A} ?",
       [("select", ("A",)), ("filter_size", ("S",), (0,)), ("query_color", ("=color",), (1,))]),
    _t(13, "same_color", "do the {A} and the {B} have the same color ?",
       [("select", ("A",)), ("select", ("B",)), ("same_color", ("=same", "=color"), (0, 1))]),
    _t(14, "choose_name", "is the {C} object a {A} or a {B} ?",
       [("select", ("=object",)), ("filter_color", ("C",), (0,)), ("choose_name", ("A", "B"), (1,))],
       context="C"),
    _t(15, "same_size", "do the {A} and the {B} have the same size ?",
       [("select", ("A",)), ("select", ("B",)), ("same_size", ("=same", "=size"), (0, 1))]),
    _t(16, "different_color", "are the {A} and the {B} different colors ?",
       [("select", ("A",)), ("select", ("B",)), ("different_color", ("=different", "=colors"), (0, 1))]),
    _t(17, "verify_name_rel", "is the object {R} the {B} a {A} ?",
       [("select", ("=object",)), ("relate_{R}", ("R", "B"), (0,)), ("verify_name", ("A",), (1,))],
       context="B"),
    _t(18, "different_size", "are the {A} and the {B} different sizes ?",
       [("select", ("A",)), ("select", ("B",)), ("different_size", ("=different", "=sizes"), (0, 1))]),
    _t(19, "color_query_size", "what size is the {C} {A} ?",
       [("select", ("A",)), ("filter_color", ("C",), (0,)), ("query_size", ("=size",), (1,))]),
)


def word_vocabulary() -> list[str]:
    """Every token the generator can emit, in a fixed order."""
    words: list[str] = []
    for t in TEMPLATES:
        for item in t.pattern:
            if not item.startswith("{"):
                words.append(item)
    for phrase in RELATION_PHRASES.values():
        words.extend(phrase.split())
    words.extend(CLASSES)
    words.extend(COLORS)
    words.extend(SIZES)
    seen, out = set(), []
    for w in words:
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


class Rejected(Exception):
    pass


@dataclass
class Realization:
    template: Template
    tokens: list[str]
    program: Program
    answer: str
    slots: dict[str, str]

    @property
    def context(self) -> str:
        slot = self.template.context_slot
        return f"{self.template.name}:{self.slots.get(slot, '-') if slot else '-'}"


def _draw_slots(t: Template, scene: SceneGraph, rng: np.random.Generator) -> dict[str, str]:
    objs = scene.objects
    names = {item[1:-1] for item in t.pattern if item.startswith("{")}
    slots: dict[str, str] = {}
    focus = objs[int(rng.integers(len(objs)))] if objs else None

    def pick_class(prefer) -> str:
        if prefer is not None and rng.random() < 0.8:
            return prefer.cls
        return CLASSES[int(rng.integers(len(CLASSES)))]

    if "A" in names:
        slots["A"] = pick_class(focus)
    if "B" in names:
        other = objs[int(rng.integers(len(objs)))] if objs else None
        if "R" in names and focus is not None:
            rel = RELATIONS[int(rng.integers(len(RELATIONS)))]
            slots["R"] = rel
            slots["B"] = pick_class(other)
        else:
            slots["B"] = pick_class(other)
    if "R" in names and "R" not in slots:
        slots["R"] = RELATIONS[int(rng.integers(len(RELATIONS)))]
    if "C" in names:
        slots["C"] = focus.color if focus is not None and rng.random() < 0.6 else \
            COLORS[int(rng.integers(len(COLORS)))]
    if "S" in names:
        slots["S"] = focus.size if focus is not None and rng.random() < 0.6 else \
            SIZES[int(rng.integers(len(SIZES)))]
    if "C1" in names:
        truth = focus.color if focus is not None else COLORS[0]
        others = [c for c in COLORS if c != truth]
        alt = others[int(rng.integers(len(others)))]
        slots["C1"], slots["C2"] = (truth, alt) if rng.random() < 0.5 else (alt, truth)
    if "S1" in names:
        slots["S1"], slots["S2"] = (SIZES[0], SIZES[1]) if rng.random() < 0.5 else (SIZES[1], SIZES[0])
    if t.name == "choose_name":
        truth = slots.get("A", CLASSES[0])
        others = [c for c in CLASSES if c != truth]
        alt = others[int(rng.integers(len(others)))]
        if focus is not None:
            slots["C"] = focus.color
            truth = focus.cls
            others = [c for c in CLASSES if c != truth]
            alt = others[int(rng.integers(len(others)))]
        slots["A"], slots["B"] = (truth, alt) if rng.random() < 0.5 else (alt, truth)
    return slots


def _expand(t: Template, slots: dict[str, str]) -> tuple[list[str], dict[str, list[int]], dict[str, list[int]]]:
    tokens: list[str] = []
    slot_pos: dict[str, list[int]] = {}
    word_pos: dict[str, list[int]] = {}
    for item in t.pattern:
        if item.startswith("{"):
            name = item[1:-1]
            value = slots[name]
            words = RELATION_PHRASES[value].split() if name == "R" else [value]
            slot_pos[name] = list(range(len(tokens), len(tokens) + len(words)))
            tokens.extend(words)
        else:
            word_pos.setdefault(item, []).append(len(tokens))
            tokens.append(item)
    return tokens, slot_pos, word_pos


_SINGLETON_OPS = ("verify_", "query_", "choose_", "same_", "different_")


def realize_question(template: Template, scene: SceneGraph, seed_or_rng) -> Realization:
    """Fill ``template`` from ``scene``; raises :class:`Rejected` when the
    realisation has no well-defined answer.

    Attribute reads must see exactly one object, so left-most tie-breaking
    never decides a generated answer.
    """
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    slots = _draw_slots(template, scene, rng)
    tokens, slot_pos, word_pos = _expand(template, slots)
    ops = []
    for spec in template.ops:
        label = spec.label.replace("{R}", slots.get("R", ""))
        q: list[int] = []
        for a in spec.args:
            if a.startswith("="):
                q.append(word_pos[a[1:]][0])
            else:
                q.extend(slot_pos[a])
        ops.append(ProgramOp(label, tuple(q), (), spec.deps))
    bare = Program(tuple(ops))
    try:
        trace = execute_trace(bare, scene, tokens)
    except ExecutionError as exc:
        raise Rejected(str(exc)) from exc
    for op, spec in zip(bare.ops, template.ops):
        if op.op.startswith(_SINGLETON_OPS):
            for j in op.dep_args:
                if len(trace.values[j]) != 1:
                    raise Rejected(f"{op.op} over {len(trace.values[j])} objects")
    ops = [ProgramOp(op.op, op.q_args,
                     tuple(VisualRef(i, scene.objects[i].box) for i in sorted(touch)),
                     op.dep_args)
           for op, touch in zip(bare.ops, trace.touched)]
    return Realization(template, tokens, Program(tuple(ops)), trace.answer, slots)


def answer_vocabulary() -> list[str]:
    return ["yes", "no", *COLORS, *SIZES, *CLASSES]
