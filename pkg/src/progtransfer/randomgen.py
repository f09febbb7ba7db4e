"""Random small KBs and well-typed random programs for differential testing.

Arguments are mostly drawn from what the KB actually contains (labels,
attribute keys, stored values, qualifier values) so that filters and
queries frequently produce non-empty results; a small share is drawn at
random to exercise the empty and unresolved paths.
"""

from __future__ import annotations

import datetime as _dt

import numpy as np

from .kb import KBBuilder, KnowledgeBase, Literal
from .program import FUNCTIONS, FunctionKind, Program, ValueKind

__all__ = ["random_kb", "random_program", "ATTRIBUTE_KEYS", "QUALIFIER_KEYS"]

F = FunctionKind

ATTRIBUTE_KEYS = {"color": "string", "height": "quantity", "founded": "year", "opened": "date"}
QUALIFIER_KEYS = {"role": "string", "rank": "quantity", "start time": "year", "point in time": "date"}
_UNITS = ("m", "cm")
_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "be", "do")


def _word(rng: np.random.Generator, n: int = 2) -> str:
    return "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), n))


def _random_literal(kind: str, rng: np.random.Generator) -> Literal:
    if kind == "string":
        return Literal.string(("red", "green", "blue", "gold")[int(rng.integers(4))])
    if kind == "quantity":
        return Literal.quantity(float(rng.integers(0, 6)), _UNITS[int(rng.integers(2))])
    if kind == "year":
        return Literal.year(int(rng.integers(1990, 1996)))
    return Literal.date(_dt.date(2000, 1, 1) + _dt.timedelta(days=int(rng.integers(0, 6))))


def _qualifiers(rng: np.random.Generator, rate: float) -> list:
    out = []
    for qkey, kind in QUALIFIER_KEYS.items():
        if rng.random() < rate:
            out.append((qkey, _random_literal(kind, rng)))
    return out


def random_kb(rng: np.random.Generator, max_entities: int = 50, max_concepts: int = 6,
              max_relations: int = 5) -> KnowledgeBase:
    """A small random KB with a concept forest, typed relations, attributes and qualifiers."""
    b = KBBuilder()
    nc = int(rng.integers(1, max_concepts + 1))
    concepts = [b.concept(f"c {_word(rng)} {i}") for i in range(nc)]
    for i in range(1, nc):
        if rng.random() < 0.5:
            b.subclass_of(concepts[i], concepts[int(rng.integers(0, i))])
    ne = int(rng.integers(0, max_entities + 1))
    names = [f"e {_word(rng)}" for _ in range(max(1, ne // 3))]
    entities = []
    for i in range(ne):
        # labels may collide across entities; Find returns all of them
        label = names[int(rng.integers(len(names)))] if rng.random() < 0.15 else f"e {_word(rng)} {i}"
        k = int(rng.integers(0, 3))
        types = sorted({concepts[int(j)] for j in rng.integers(0, nc, k)})
        entities.append(b.entity(label, types))
    nr = int(rng.integers(1, max_relations + 1))
    relations = []
    for i in range(nr):
        dom = sorted({concepts[int(j)] for j in rng.integers(0, nc, int(rng.integers(0, 3)))})
        ran = sorted({concepts[int(j)] for j in rng.integers(0, nc, int(rng.integers(0, 3)))})
        relations.append(b.relation(f"r {_word(rng)} {i}", dom, ran))
    if entities:
        for _ in range(int(rng.integers(0, 3 * ne + 1))):
            h, t = (entities[int(j)] for j in rng.integers(0, ne, 2))
            b.triple(h, relations[int(rng.integers(nr))], t, _qualifiers(rng, 0.3))
        for e in entities:
            for key, kind in ATTRIBUTE_KEYS.items():
                for _ in range(int(rng.integers(0, 3)) if rng.random() < 0.6 else 0):
                    b.attribute(e, key, _random_literal(kind, rng), _qualifiers(rng, 0.3))
    return b.build()


class _Args:
    """Argument text sampler biased towards values present in the KB."""

    def __init__(self, kb: KnowledgeBase, rng: np.random.Generator):
        self.kb, self.rng = kb, rng
        self.values = {k: [] for k in ATTRIBUTE_KEYS}
        self.qvalues = {k: [] for k in QUALIFIER_KEYS}
        for fact in kb.attributes:
            self.values.setdefault(fact.key, []).append(fact.value)
            for qk, qv in fact.qualifiers:
                self.qvalues.setdefault(qk, []).append(qv)
        for quals in kb.triple_qualifiers:
            for qk, qv in quals:
                self.qvalues.setdefault(qk, []).append(qv)

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def miss(self) -> bool:
        return self.rng.random() < 0.03

    def entity(self) -> str:
        kb = self.kb
        if not kb.entity_labels or self.miss():
            return "no such entity"
        return self.pick(kb.entity_labels)

    def concept(self) -> str:
        return "no such concept" if self.miss() else self.pick(self.kb.concept_labels)

    def relation(self) -> str:
        return "no such relation" if self.miss() else self.pick(self.kb.relation_labels)

    def key(self, kind: str | None = None) -> str:
        keys = [k for k, v in ATTRIBUTE_KEYS.items() if kind is None or v == kind]
        return self.pick(keys)

    def value(self, kind: str, pool: list) -> str:
        same = [v for v in pool if v.kind == kind]
        lit = self.pick(same) if same and self.rng.random() < 0.8 else _random_literal(kind, self.rng)
        return lit.render()

    def op(self, kind: str) -> str:
        return self.pick(("=", "!=") if kind == "string" else ("=", "!=", "<", ">"))


_KIND_OF = {"Str": "string", "Num": "quantity", "Year": "year", "Date": "date"}


def _suffix_kind(fn: FunctionKind) -> str:
    for suffix, kind in _KIND_OF.items():
        if fn.name.endswith(suffix):
            return kind
    raise ValueError(fn)


def _argument(fn: FunctionKind, a: _Args) -> str:
    rng = a.rng
    if fn is F.Find:
        return a.entity()
    if fn is F.FilterConcept:
        return a.concept()
    if fn is F.Relate:
        return f"{a.relation()} {a.pick(('forward', 'backward'))}"
    if fn is F.QueryRelation:
        return a.relation() if rng.random() < 0.5 else ""
    if fn.name.startswith("Filter") and fn is not F.FilterConcept:
        kind = _suffix_kind(fn)
        key = a.key(kind)
        parts = [key, a.value(kind, a.values[key])]
        if kind != "string":
            parts.append(a.op(kind))
        return "|".join(parts)
    if fn.name.startswith("QFilter"):
        kind = _suffix_kind(fn)
        qkey = a.pick([k for k, v in QUALIFIER_KEYS.items() if v == kind])
        parts = [qkey, a.value(kind, a.qvalues[qkey])]
        if kind != "string":
            parts.append(a.op(kind))
        return "|".join(parts)
    if fn.name.startswith("Verify"):
        kind = _suffix_kind(fn)
        pool = [v for vs in a.values.values() for v in vs]
        parts = [a.value(kind, pool)]
        if kind != "string":
            parts.append(a.op(kind))
        return "|".join(parts)
    if fn is F.QueryAttr:
        return a.key()
    if fn is F.QueryAttrUnderCondition:
        key = a.key()
        qkey = a.pick(list(QUALIFIER_KEYS))
        return f"{key}|{qkey}|{a.value(QUALIFIER_KEYS[qkey], a.qvalues[qkey])}"
    if fn is F.QueryAttrQualifier:
        key = a.key()
        return f"{key}|{a.value(ATTRIBUTE_KEYS[key], a.values[key])}|{a.pick(list(QUALIFIER_KEYS))}"
    if fn is F.QueryRelationQualifier:
        return f"{a.relation()}|{a.pick(list(QUALIFIER_KEYS))}"
    if fn is F.SelectBetween:
        return f"{a.key()}|{a.pick(('greater', 'less'))}"
    if fn is F.SelectAmong:
        return f"{a.key()}|{a.pick(('largest', 'smallest'))}"
    return ""


_PRODUCERS = {kind: [] for kind in ValueKind}
for _fn, _spec in FUNCTIONS.items():
    if _spec.output is not None:
        _PRODUCERS[_spec.output].append(_fn)
        if _spec.output is ValueKind.ENTITIES_FACTS:
            _PRODUCERS[ValueKind.ENTITIES].append(_fn)
_LEAVES = {ValueKind.ENTITIES: [F.FindAll, F.Find]}


def _tree(want: ValueKind, budget: int, a: _Args) -> list | None:
    """Postfix token list producing ``want`` within ``budget`` tokens, or None."""
    if budget <= 0:
        return None
    options = list(_PRODUCERS[want])
    a.rng.shuffle(options)
    if budget <= 2 and want in _LEAVES:
        options = _LEAVES[want] + options
    for fn in options:
        inputs = FUNCTIONS[fn].inputs
        rest = budget - 1
        if rest < len(inputs):
            continue
        parts = []
        for i, need in enumerate(inputs):
            # leave at least one token for each later input
            cap = rest - len(parts) - (len(inputs) - i - 1)
            sub = _tree(need, int(a.rng.integers(1, cap + 1)), a)
            if sub is None:
                break
            parts.extend(sub)
        else:
            return parts + [(fn, _argument(fn, a))]
    return None


def random_program(kb: KnowledgeBase, rng: np.random.Generator, max_len: int = 8) -> Program:
    """A stack-valid, kind-correct program of at most ``max_len`` tokens."""
    a = _Args(kb, rng)
    kinds = list(ValueKind)
    while True:
        want = kinds[int(rng.integers(len(kinds)))]
        steps = _tree(want, int(rng.integers(1, max_len + 1)), a)
        if steps is not None and len(steps) <= max_len:
            return Program.of(steps)
