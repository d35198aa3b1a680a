"""Brute-force reference evaluator used as a test oracle.

Set-valued operations are evaluated by enumerating every subset of the scene's
objects and keeping the one whose members satisfy the operation's membership
rule.  Nothing here calls into the package executor or its relation helper.
"""

from itertools import combinations

CLASS_WORDS = ("boat", "flag", "car", "dog", "tree", "cup", "chair", "horse", "bird", "cat",
               "motorbike", "plane")
COLOR_WORDS = ("white", "red", "blue", "green", "yellow", "black", "brown", "gray")
SIZE_WORDS = ("small", "large")
MARGIN = 0.05


class OracleError(Exception):
    pass


def _center(o):
    b = o.box
    return (b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0


def _stands(rel, a, b):
    (ax, ay), (bx, by) = _center(a), _center(b)
    return {"left": bx - ax > MARGIN, "right": ax - bx > MARGIN,
            "above": by - ay > MARGIN, "below": ay - by > MARGIN}[rel]


def _subsets(n):
    for k in range(n + 1):
        for c in combinations(range(n), k):
            yield frozenset(c)


def _unique_subset(n, member):
    """The only subset S with ``o in S <=> member(o)`` for every object."""
    hits = [s for s in _subsets(n) if all((o in s) == member(o) for o in range(n))]
    assert len(hits) == 1
    return hits[0]


def _pick(objs, scene):
    """The object of ``objs`` that no other member precedes left-to-right."""
    if not isinstance(objs, frozenset):
        raise OracleError("not a set")
    if not objs:
        raise OracleError("empty")
    for o in objs:
        ko = (_center(scene.objects[o])[0], o)
        if all(ko <= (_center(scene.objects[p])[0], p) for p in objs):
            return scene.objects[o]
    raise OracleError("no minimum")


def _attr(o, kind):
    return {"color": o.color, "size": o.size, "name": o.cls}[kind]


VOCAB = {"color": COLOR_WORDS, "size": SIZE_WORDS, "name": CLASS_WORDS}


def _arg_words(op, tokens, vocab):
    return [tokens[t] for t in sorted(op.q_args) if t < len(tokens) and tokens[t] in vocab]


def _deps(op, values, kind, count):
    if len(op.dep_args) != count:
        raise OracleError("arity")
    out = [values[j] for j in sorted(op.dep_args)]
    if not all(isinstance(v, kind) and (kind is not int or isinstance(v, bool)) for v in out):
        raise OracleError("type")
    return out


def oracle_answer(program, scene, tokens):
    n = len(scene.objects)
    values = []
    for op in program.ops:
        name = op.op
        if name == "select":
            if op.dep_args:
                raise OracleError("select deps")
            words = [tokens[t] for t in sorted(op.q_args) if t < len(tokens)]
            classes = [w for w in words if w in CLASS_WORDS]
            if classes:
                c = classes[0]
                val = _unique_subset(n, lambda o: scene.objects[o].cls == c)
            elif "object" in words or "objects" in words:
                val = _unique_subset(n, lambda o: True)
            else:
                raise OracleError("select arg")
        elif name in ("filter_color", "filter_size"):
            kind = name[7:]
            (src,) = _deps(op, values, frozenset, 1)
            words = _arg_words(op, tokens, VOCAB[kind])
            if not words:
                raise OracleError("filter arg")
            val = _unique_subset(n, lambda o: o in src and _attr(scene.objects[o], kind) == words[0])
        elif name.startswith("relate_"):
            rel = name[7:]
            (src,) = _deps(op, values, frozenset, 1)
            words = _arg_words(op, tokens, CLASS_WORDS)
            if not words:
                raise OracleError("relate arg")
            anchors = [a for a in range(n) if scene.objects[a].cls == words[0]]
            val = _unique_subset(n, lambda o: o in src and any(
                a != o and _stands(rel, scene.objects[o], scene.objects[a]) for a in anchors))
        elif name == "exist":
            (src,) = _deps(op, values, frozenset, 1)
            val = len(src) > 0
        elif name.startswith("verify_") or name.startswith("query_") or name.startswith("choose_"):
            kind = name.split("_", 1)[1]
            (src,) = _deps(op, values, frozenset, 1)
            o = _pick(src, scene)
            actual = _attr(o, kind)
            words = _arg_words(op, tokens, VOCAB[kind])
            if name.startswith("verify_"):
                if not words:
                    raise OracleError("verify arg")
                val = actual == words[0]
            elif name.startswith("query_"):
                val = actual
            else:
                if len(words) < 2:
                    raise OracleError("choose args")
                if actual not in words[:2]:
                    raise OracleError("choose mismatch")
                val = actual
        elif name in ("and", "or"):
            x, y = _deps(op, values, bool, 2)
            val = (x and y) if name == "and" else (x or y)
        elif name.startswith("same_") or name.startswith("different_"):
            kind = name.split("_", 1)[1]
            a, b = _deps(op, values, frozenset, 2)
            same = _attr(_pick(a, scene), kind) == _attr(_pick(b, scene), kind)
            val = same if name.startswith("same_") else not same
        else:
            raise OracleError("unknown op")
        values.append(val)
    if not values:
        raise OracleError("empty")
    last = values[-1]
    if isinstance(last, bool):
        return "yes" if last else "no"
    if isinstance(last, str):
        return last
    raise OracleError("set result")


FAMILIES = (
    ("filter_color", "filter_size"),
    ("relate_left", "relate_right", "relate_above", "relate_below"),
    ("verify_color", "verify_size", "verify_name", "query_color", "query_size", "query_name",
     "choose_color", "choose_size", "choose_name", "exist"),
    ("and", "or"),
    ("same_color", "same_size", "different_color", "different_size"),
)
SWAP_WORDS = CLASS_WORDS + COLOR_WORDS + SIZE_WORDS + ("object",)


def random_pairs(n, seed):
    """``n`` (program, scene, tokens) triples with at most 8 objects per scene.

    Programs come from the question templates, are then run on an unrelated
    scene and are randomly mutated (operation swapped within its family,
    question words replaced), so both answers and execution errors occur.
    """
    import numpy as np
    from progsup.program import Program, ProgramOp
    from progsup.synth import SceneConfig, gen_scene
    from progsup.synth.templates import TEMPLATES, Rejected, realize_question

    rng = np.random.default_rng(seed)
    cfg = SceneConfig(max_objects=8)
    out = []
    while len(out) < n:
        src = gen_scene(int(rng.integers(2 ** 31)), cfg)
        t = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        try:
            r = realize_question(t, src, rng)
        except Rejected:
            continue
        tokens = list(r.tokens)
        ops = list(r.program.ops)
        if rng.random() < 0.5:
            i = int(rng.integers(len(ops)))
            fam = next((f for f in FAMILIES if ops[i].op in f), None)
            if fam:
                ops[i] = ProgramOp(fam[int(rng.integers(len(fam)))], ops[i].q_args, (), ops[i].dep_args)
        if rng.random() < 0.3:
            k = int(rng.integers(len(tokens)))
            tokens[k] = SWAP_WORDS[int(rng.integers(len(SWAP_WORDS)))]
        scene = src if rng.random() < 0.3 else gen_scene(int(rng.integers(2 ** 31)), cfg)
        out.append((Program(tuple(ops)), scene, tokens))
    return out
