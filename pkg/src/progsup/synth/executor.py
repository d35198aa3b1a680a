"""Oracle program executor over scene graphs.

Operation arguments that come from the question are read from the tokens the
op points at: a class word, a colour word, a size word or a relation phrase.
Results are object sets (frozensets of object ids), booleans, or answer words.

Conventions for attribute reads over a set: an empty set is an execution
error; several objects resolve to the left-most one (ties by object id).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from ..program import Program, ProgramOp
from .world import CLASSES, COLORS, RELATIONS, SIZES, SceneGraph, SceneObject, related

Value = Union[frozenset, bool, str]

_REL_OPS = {f"relate_{r}": r for r in RELATIONS}


class ExecutionError(RuntimeError):
    pass


@dataclass
class Trace:
    values: list
    touched: list[frozenset]

    @property
    def answer(self) -> str:
        return as_answer(self.values[-1])


def as_answer(value: Value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, str):
        return value
    raise ExecutionError("program result is an object set, not an answer")


def _words(op: ProgramOp, tokens: Sequence[str], vocab: Sequence[str]) -> list[str]:
    return [tokens[t] for t in op.q_args if t < len(tokens) and tokens[t] in vocab]


def _one(op: ProgramOp, tokens, vocab, what: str) -> str:
    found = _words(op, tokens, vocab)
    if not found:
        raise ExecutionError(f"{op.op}: no {what} argument among question tokens")
    return found[0]


def _two(op: ProgramOp, tokens, vocab, what: str) -> tuple[str, str]:
    found = _words(op, tokens, vocab)
    if len(found) < 2:
        raise ExecutionError(f"{op.op}: needs two {what} options")
    return found[0], found[1]


def resolve(objs: frozenset, scene: SceneGraph) -> SceneObject:
    if not isinstance(objs, frozenset):
        raise ExecutionError("expected an object set")
    if not objs:
        raise ExecutionError("attribute read on an empty object set")
    cands = [scene.objects[i] for i in objs]
    return min(cands, key=lambda o: (o.box.center[0], o.obj_id))


def _attr(o: SceneObject, kind: str) -> str:
    return {"color": o.color, "size": o.size, "name": o.cls}[kind]


_VOCAB = {"color": COLORS, "size": SIZES, "name": CLASSES}


def execute_trace(p: Program, scene: SceneGraph, tokens: Sequence[str]) -> Trace:
    values: list = []
    touched: list[frozenset] = []
    everything = frozenset(range(len(scene.objects)))

    def dep_values(op: ProgramOp, kind: type, count: int) -> list:
        if len(op.dep_args) != count:
            raise ExecutionError(f"{op.op}: expects {count} dependencies, got {len(op.dep_args)}")
        out = [values[j] for j in op.dep_args]
        for v in out:
            if not isinstance(v, kind):
                raise ExecutionError(f"{op.op}: argument of type {type(v).__name__}, "
                                     f"expected {kind.__name__}")
        return out

    for op in p.ops:
        name = op.op
        touch: frozenset = frozenset()
        if name == "select":
            if op.dep_args:
                raise ExecutionError("select takes no dependencies")
            words = [tokens[t] for t in op.q_args if t < len(tokens)]
            cls = next((w for w in words if w in CLASSES), None)
            if cls is not None:
                val = frozenset(o.obj_id for o in scene.objects if o.cls == cls)
            elif "object" in words or "objects" in words:
                val = everything
            else:
                raise ExecutionError("select: no class argument")
            touch = val
        elif name in ("filter_color", "filter_size"):
            kind = name.split("_")[1]
            (src,) = dep_values(op, frozenset, 1)
            want = _one(op, tokens, _VOCAB[kind], kind)
            val = frozenset(i for i in src if _attr(scene.objects[i], kind) == want)
            touch = val
        elif name in _REL_OPS:
            rel = _REL_OPS[name]
            (src,) = dep_values(op, frozenset, 1)
            cls = _one(op, tokens, CLASSES, "class")
            anchors = [o for o in scene.objects if o.cls == cls]
            keep, used = set(), set()
            for i in src:
                o = scene.objects[i]
                hits = [a.obj_id for a in anchors if a.obj_id != i and related(rel, o.box, a.box)]
                if hits:
                    keep.add(i)
                    used.update(hits)
            val = frozenset(keep)
            touch = frozenset(keep | used)
        elif name == "exist":
            (src,) = dep_values(op, frozenset, 1)
            val = bool(src)
            touch = src
        elif name.startswith("verify_"):
            kind = name.split("_")[1]
            (src,) = dep_values(op, frozenset, 1)
            o = resolve(src, scene)
            val = _attr(o, kind) == _one(op, tokens, _VOCAB[kind], kind)
            touch = frozenset({o.obj_id})
        elif name.startswith("query_"):
            kind = name.split("_")[1]
            (src,) = dep_values(op, frozenset, 1)
            o = resolve(src, scene)
            val = _attr(o, kind)
            touch = frozenset({o.obj_id})
        elif name.startswith("choose_"):
            kind = name.split("_")[1]
            (src,) = dep_values(op, frozenset, 1)
            o = resolve(src, scene)
            a, b = _two(op, tokens, _VOCAB[kind], kind)
            actual = _attr(o, kind)
            if actual not in (a, b):
                raise ExecutionError(f"{name}: neither option matches")
            val = actual
            touch = frozenset({o.obj_id})
        elif name in ("and", "or"):
            x, y = dep_values(op, bool, 2)
            val = (x and y) if name == "and" else (x or y)
        elif name.startswith("same_") or name.startswith("different_"):
            kind = name.split("_")[1]
            sa, sb = dep_values(op, frozenset, 2)
            oa, ob = resolve(sa, scene), resolve(sb, scene)
            same = _attr(oa, kind) == _attr(ob, kind)
            val = same if name.startswith("same_") else not same
            touch = frozenset({oa.obj_id, ob.obj_id})
        else:
            raise ExecutionError(f"unknown operation {name!r}")
        values.append(val)
        touched.append(touch)
    if not values:
        raise ExecutionError("empty program")
    return Trace(values, touched)


def execute_program(p: Program, scene: SceneGraph, tokens: Sequence[str]) -> str:
    return execute_trace(p, scene, tokens).answer
