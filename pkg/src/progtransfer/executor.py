"""Program execution against a :class:`~progtransfer.kb.KnowledgeBase`.

:func:`execute` uses the KB indexes. :func:`brute_force_oracle` computes the
same results with full scans over the raw fact lists; the two are kept
independent so that one can check the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kb import KnowledgeBase, Literal, compare_literals, normalize_label
from .program import (
    FUNCTIONS,
    FunctionKind,
    Program,
    ValueKind,
    split_literal_args,
    split_relation_arg,
)

__all__ = [
    "ExecutionError",
    "StackError",
    "TypeMismatchError",
    "ResolutionError",
    "ArgumentError",
    "EntitySet",
    "EntitySetWithFacts",
    "LiteralValue",
    "Text",
    "Number",
    "Boolean",
    "ExecutionResult",
    "execute",
    "brute_force_oracle",
    "render_answers",
]

F = FunctionKind


class ExecutionError(Exception):
    """Base class; ``position`` is the failing token index."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class StackError(ExecutionError):
    """Structural failure: underflow or not exactly one final value."""


class TypeMismatchError(ExecutionError):
    pass


class ResolutionError(ExecutionError):
    """An entity/concept/relation label is not in the KB."""


class ArgumentError(ExecutionError):
    """Malformed textual argument."""


# ---------------------------------------------------------------------------
# Runtime values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntitySet:
    ids: frozenset

    kind = ValueKind.ENTITIES


@dataclass(frozen=True)
class EntitySetWithFacts(EntitySet):
    # (entity id, fact handle); handles are ("attr", i) or ("rel", i)
    facts: frozenset = frozenset()

    kind = ValueKind.ENTITIES_FACTS


@dataclass(frozen=True)
class LiteralValue:
    values: frozenset  # of Literal

    kind = ValueKind.VALUE


@dataclass(frozen=True)
class Text:
    values: frozenset  # of str

    kind = ValueKind.TEXT


@dataclass(frozen=True)
class Number:
    value: float

    kind = ValueKind.NUMBER


@dataclass(frozen=True)
class Boolean:
    value: bool

    kind = ValueKind.BOOLEAN


@dataclass(frozen=True)
class TraceStep:
    position: int
    function: FunctionKind
    argument: str
    inputs: tuple
    output: str


@dataclass(frozen=True)
class ExecutionResult:
    value: object
    answers: tuple
    trace: tuple = field(default=(), compare=False)


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def render_answers(value, kb: KnowledgeBase) -> tuple:
    """Sorted answer strings for a final runtime value."""
    if isinstance(value, EntitySet):
        out = [kb.entity_labels[e] for e in value.ids]
    elif isinstance(value, LiteralValue):
        out = [v.render() for v in value.values]
    elif isinstance(value, Text):
        out = list(value.values)
    elif isinstance(value, Number):
        out = [_format_number(value.value)]
    elif isinstance(value, Boolean):
        out = ["yes" if value.value else "no"]
    else:
        raise TypeError(f"not a runtime value: {value!r}")
    return tuple(sorted(set(out)))


def _summary(value) -> str:
    if isinstance(value, EntitySetWithFacts):
        return f"entities[{len(value.ids)}]+facts[{len(value.facts)}]"
    if isinstance(value, EntitySet):
        return f"entities[{len(value.ids)}]"
    if isinstance(value, (LiteralValue, Text)):
        return f"{type(value).__name__.lower()}[{len(value.values)}]"
    if isinstance(value, Number):
        return f"number({_format_number(value.value)})"
    return f"boolean({value.value})"


# ---------------------------------------------------------------------------
# Shared argument handling
# ---------------------------------------------------------------------------


def _literal_args(fn, arg, pos):
    try:
        return split_literal_args(fn, arg)
    except ValueError as exc:
        raise ArgumentError(str(exc), pos) from None


def _parse(kind, text, pos):
    try:
        return Literal.parse_as(kind, text)
    except ValueError as exc:
        raise ArgumentError(str(exc), pos) from None


def _matches(stored: Literal, text: str, op: str = "=") -> bool:
    """Compare a stored literal against argument text read in the stored kind."""
    try:
        given = Literal.parse_as(stored.kind, text)
    except ValueError:
        return False
    return compare_literals(stored, given, op)


_FILTER_KIND = {
    F.FilterStr: "string", F.FilterNum: "quantity", F.FilterYear: "year", F.FilterDate: "date",
    F.QFilterStr: "string", F.QFilterNum: "quantity", F.QFilterYear: "year", F.QFilterDate: "date",
    F.VerifyStr: "string", F.VerifyNum: "quantity", F.VerifyYear: "year", F.VerifyDate: "date",
}


def _pop_inputs(stack, fn, pos):
    spec = FUNCTIONS[fn]
    n = len(spec.inputs)
    if len(stack) < n:
        raise StackError(f"stack underflow at {fn.name}: needs {n}, have {len(stack)}", pos)
    args = stack[len(stack) - n:] if n else []
    del stack[len(stack) - n:]
    for have, want in zip(args, spec.inputs):
        if not have.kind.satisfies(want):
            raise TypeMismatchError(f"{fn.name} expects {want.value}, got {have.kind.value}", pos)
    return args


def _check_structure(program: Program) -> None:
    """Arity-only pass so structural errors win over argument errors."""
    depth = 0
    for pos, fn in enumerate(program.functions):
        if fn.is_control:
            raise StackError(f"control token {fn.name} inside a program", pos)
        if depth < fn.arity:
            raise StackError(f"stack underflow at {fn.name}: needs {fn.arity}, have {depth}", pos)
        depth += 1 - fn.arity
    if depth != 1:
        raise StackError(f"{depth} values remain at the end of the program", len(program))


def _check_kinds(program: Program) -> None:
    stack = []
    for pos, fn in enumerate(program.functions):
        spec = FUNCTIONS[fn]
        got = stack[len(stack) - len(spec.inputs):] if spec.inputs else []
        for have, want in zip(got, spec.inputs):
            if not have.satisfies(want):
                raise TypeMismatchError(f"{fn.name} expects {want.value}, got {have.value}", pos)
        del stack[len(stack) - len(spec.inputs):]
        stack.append(spec.output)


# ---------------------------------------------------------------------------
# Indexed executor
# ---------------------------------------------------------------------------


def _resolve_entities(kb, name, pos):
    ids = kb.entities_named(name)
    if not ids:
        raise ResolutionError(f"no entity named {name!r}", pos)
    return ids


def _resolve_concept(kb, name, pos):
    c = kb.concept_named(name)
    if c is None:
        raise ResolutionError(f"no concept named {name!r}", pos)
    return c


def _resolve_relation(kb, name, pos):
    r = kb.relation_named(name)
    if r is None:
        raise ResolutionError(f"no relation named {name!r}", pos)
    return r


def _qualifiers_of(kb, handle):
    kind, i = handle
    return kb.attributes[i].qualifiers if kind == "attr" else kb.triple_qualifiers[i]


def _attr_compare_key(kb, e, key, largest):
    vals = [kb.attributes[i].value.numeric() for i in kb.attribute_facts(e)
            if kb.attributes[i].key == key]
    vals = [v for v in vals if v is not None]
    if not vals:
        return None
    return max(vals) if largest else min(vals)


def _select(kb, ids, key, largest):
    best, best_val = None, None
    for e in sorted(ids):
        v = _attr_compare_key(kb, e, key, largest)
        if v is None:
            continue
        if best is None or (v > best_val if largest else v < best_val):
            best, best_val = e, v
    return Text(frozenset() if best is None else frozenset({kb.entity_labels[best]}))


def _step(kb: KnowledgeBase, fn: FunctionKind, arg: str, inputs: list, pos: int):
    if fn is F.FindAll:
        return EntitySet(kb.all_entities())
    if fn is F.Find:
        return EntitySet(_resolve_entities(kb, arg, pos))
    if fn is F.FilterConcept:
        c = _resolve_concept(kb, arg, pos)
        return EntitySet(inputs[0].ids & kb.instances_of(c))
    if fn in (F.FilterStr, F.FilterNum, F.FilterYear, F.FilterDate):
        parts = _literal_args(fn, arg, pos)
        key, text = parts[0], parts[1]
        op = parts[2] if len(parts) > 2 else "="
        given = _parse(_FILTER_KIND[fn], text, pos)
        ids, facts = set(), set()
        for e in inputs[0].ids:
            for i in kb.attribute_facts(e):
                fact = kb.attributes[i]
                if fact.key == key and compare_literals(fact.value, given, op):
                    ids.add(e)
                    facts.add((e, ("attr", i)))
        return EntitySetWithFacts(frozenset(ids), frozenset(facts))
    if fn in (F.QFilterStr, F.QFilterNum, F.QFilterYear, F.QFilterDate):
        parts = _literal_args(fn, arg, pos)
        qkey, text = parts[0], parts[1]
        op = parts[2] if len(parts) > 2 else "="
        given = _parse(_FILTER_KIND[fn], text, pos)
        kept = frozenset(
            (e, h) for e, h in inputs[0].facts
            if any(k == qkey and compare_literals(v, given, op) for k, v in _qualifiers_of(kb, h))
        )
        return EntitySetWithFacts(frozenset(e for e, _ in kept), kept)
    if fn is F.Relate:
        label, direction = split_relation_arg(arg)
        r = _resolve_relation(kb, label, pos)
        ids, facts = set(), set()
        for e in inputs[0].ids:
            if direction == "forward":
                for i in kb.triples_from(e, r):
                    t = kb.triples[i][2]
                    ids.add(t)
                    facts.add((t, ("rel", i)))
            else:
                for i in kb.triples_to(e, r):
                    h = kb.triples[i][0]
                    ids.add(h)
                    facts.add((h, ("rel", i)))
        return EntitySetWithFacts(frozenset(ids), frozenset(facts))
    if fn is F.And:
        return EntitySet(inputs[0].ids & inputs[1].ids)
    if fn is F.Or:
        return EntitySet(inputs[0].ids | inputs[1].ids)
    if fn is F.QueryName:
        return Text(frozenset(kb.entity_labels[e] for e in inputs[0].ids))
    if fn is F.Count:
        return Number(float(len(inputs[0].ids)))
    if fn is F.QueryAttr:
        (key,) = _literal_args(fn, arg, pos)
        return LiteralValue(frozenset(
            kb.attributes[i].value for e in inputs[0].ids for i in kb.attribute_facts(e)
            if kb.attributes[i].key == key))
    if fn is F.QueryAttrUnderCondition:
        key, qkey, qtext = _literal_args(fn, arg, pos)
        out = set()
        for e in inputs[0].ids:
            for i in kb.attribute_facts(e):
                fact = kb.attributes[i]
                if fact.key == key and any(k == qkey and _matches(v, qtext) for k, v in fact.qualifiers):
                    out.add(fact.value)
        return LiteralValue(frozenset(out))
    if fn is F.QueryRelation:
        restrict = _resolve_relation(kb, split_relation_arg(arg)[0], pos) if arg.strip() else None
        targets = inputs[1].ids
        out = set()
        for a in inputs[0].ids:
            for r in range(kb.num_relations):
                if restrict is not None and r != restrict:
                    continue
                if any(kb.triples[i][2] in targets for i in kb.triples_from(a, r)):
                    out.add(kb.relation_labels[r])
        return Text(frozenset(out))
    if fn is F.SelectBetween:
        key, op = _literal_args(fn, arg, pos)
        return _select(kb, inputs[0].ids | inputs[1].ids, key, op == "greater")
    if fn is F.SelectAmong:
        key, op = _literal_args(fn, arg, pos)
        return _select(kb, inputs[0].ids, key, op == "largest")
    if fn in (F.VerifyStr, F.VerifyNum, F.VerifyYear, F.VerifyDate):
        parts = _literal_args(fn, arg, pos)
        op = parts[1] if len(parts) > 1 else "="
        given = _parse(_FILTER_KIND[fn], parts[0], pos)
        return Boolean(any(compare_literals(v, given, op) for v in inputs[0].values))
    if fn is F.QueryAttrQualifier:
        key, vtext, qkey = _literal_args(fn, arg, pos)
        out = set()
        for e in inputs[0].ids:
            for i in kb.attribute_facts(e):
                fact = kb.attributes[i]
                if fact.key == key and _matches(fact.value, vtext):
                    out.update(v for k, v in fact.qualifiers if k == qkey)
        return LiteralValue(frozenset(out))
    if fn is F.QueryRelationQualifier:
        pred, qkey = _literal_args(fn, arg, pos)
        r = _resolve_relation(kb, pred, pos)
        out = set()
        for a in inputs[0].ids:
            for i in kb.triples_from(a, r):
                if kb.triples[i][2] in inputs[1].ids:
                    out.update(v for k, v in kb.triple_qualifiers[i] if k == qkey)
        return LiteralValue(frozenset(out))
    raise StackError(f"control token {fn.name} inside a program", pos)


def execute(program: Program, kb: KnowledgeBase, trace: bool = False) -> ExecutionResult:
    """Run ``program`` on ``kb``.

    Raises StackError for arity problems, TypeMismatchError for value-kind
    problems, ResolutionError for unknown labels and ArgumentError for bad
    literal text. An empty answer is a normal result.
    """
    _check_structure(program)
    _check_kinds(program)
    stack: list = []
    steps = []
    for pos, (fn, arg) in enumerate(program):
        inputs = _pop_inputs(stack, fn, pos)
        out = _step(kb, fn, arg, inputs, pos)
        stack.append(out)
        if trace:
            steps.append(TraceStep(pos, fn, arg, tuple(_summary(v) for v in inputs), _summary(out)))
    value = stack[0]
    return ExecutionResult(value, render_answers(value, kb), tuple(steps))


# ---------------------------------------------------------------------------
# Brute-force oracle: no indexes, every step scans the raw stores
# ---------------------------------------------------------------------------


class _Scan:
    def __init__(self, kb: KnowledgeBase):
        self.kb = kb
        self.entities = list(range(len(kb.entity_labels)))
        self.type_pairs = [(e, c) for e in self.entities for c in kb.instance_of[e]]
        self.sub_pairs = list(kb.subclass_of)
        self.triples = list(enumerate(kb.triples))
        self.attrs = list(enumerate(kb.attributes))

    def entities_named(self, name):
        key = normalize_label(name)
        return frozenset(e for e in self.entities if normalize_label(self.kb.entity_labels[e]) == key)

    def concept_named(self, name):
        key = normalize_label(name)
        hits = [c for c, lab in enumerate(self.kb.concept_labels) if normalize_label(lab) == key]
        return hits[0] if hits else None

    def relation_named(self, name):
        key = normalize_label(name)
        hits = [r for r, lab in enumerate(self.kb.relation_labels) if normalize_label(lab) == key]
        return hits[0] if hits else None

    def descendants(self, c):
        found = {c}
        changed = True
        while changed:
            changed = False
            for child, parent in self.sub_pairs:
                if parent in found and child not in found:
                    found.add(child)
                    changed = True
        return found

    def members(self, c):
        concepts = self.descendants(c)
        return frozenset(e for e, t in self.type_pairs if t in concepts)


def _oracle_literal_args(fn, arg, pos):
    from .program import ARG_SEPARATOR

    spec = FUNCTIONS[fn]
    parts = [p.strip() for p in arg.split(ARG_SEPARATOR)] if arg.strip() else []
    if len(parts) != len(spec.text_inputs) or any(not p for p in parts):
        raise ArgumentError(f"{fn.name}: wrong textual inputs {arg!r}", pos)
    # defer operator/value checks to the shared splitter for identical messages
    return _literal_args(fn, arg, pos)


def _oracle_step(scan: _Scan, fn, arg, inputs, pos):
    kb = scan.kb
    if fn is F.FindAll:
        return EntitySet(frozenset(scan.entities))
    if fn is F.Find:
        ids = scan.entities_named(arg)
        if not ids:
            raise ResolutionError(f"no entity named {arg!r}", pos)
        return EntitySet(ids)
    if fn is F.FilterConcept:
        c = scan.concept_named(arg)
        if c is None:
            raise ResolutionError(f"no concept named {arg!r}", pos)
        members = scan.members(c)
        return EntitySet(frozenset(e for e in inputs[0].ids if e in members))
    if fn in (F.FilterStr, F.FilterNum, F.FilterYear, F.FilterDate):
        parts = _oracle_literal_args(fn, arg, pos)
        op = parts[2] if len(parts) > 2 else "="
        given = _parse(_FILTER_KIND[fn], parts[1], pos)
        hits = [(f.entity, ("attr", i)) for i, f in scan.attrs
                if f.entity in inputs[0].ids and f.key == parts[0]
                and compare_literals(f.value, given, op)]
        return EntitySetWithFacts(frozenset(e for e, _ in hits), frozenset(hits))
    if fn in (F.QFilterStr, F.QFilterNum, F.QFilterYear, F.QFilterDate):
        parts = _oracle_literal_args(fn, arg, pos)
        op = parts[2] if len(parts) > 2 else "="
        given = _parse(_FILTER_KIND[fn], parts[1], pos)
        kept = []
        for e, (kind, i) in inputs[0].facts:
            quals = kb.attributes[i].qualifiers if kind == "attr" else kb.triple_qualifiers[i]
            for k, v in quals:
                if k == parts[0] and compare_literals(v, given, op):
                    kept.append((e, (kind, i)))
                    break
        return EntitySetWithFacts(frozenset(e for e, _ in kept), frozenset(kept))
    if fn is F.Relate:
        label, direction = split_relation_arg(arg)
        r = scan.relation_named(label)
        if r is None:
            raise ResolutionError(f"no relation named {label!r}", pos)
        if direction == "forward":
            hits = [(t, ("rel", i)) for i, (h, rr, t) in scan.triples if rr == r and h in inputs[0].ids]
        else:
            hits = [(h, ("rel", i)) for i, (h, rr, t) in scan.triples if rr == r and t in inputs[0].ids]
        return EntitySetWithFacts(frozenset(e for e, _ in hits), frozenset(hits))
    if fn is F.And:
        return EntitySet(frozenset(e for e in inputs[0].ids if e in inputs[1].ids))
    if fn is F.Or:
        return EntitySet(frozenset(list(inputs[0].ids) + list(inputs[1].ids)))
    if fn is F.QueryName:
        return Text(frozenset(kb.entity_labels[e] for e in scan.entities if e in inputs[0].ids))
    if fn is F.Count:
        return Number(float(sum(1 for e in scan.entities if e in inputs[0].ids)))
    if fn is F.QueryAttr:
        (key,) = _oracle_literal_args(fn, arg, pos)
        return LiteralValue(frozenset(f.value for _, f in scan.attrs
                                      if f.entity in inputs[0].ids and f.key == key))
    if fn is F.QueryAttrUnderCondition:
        key, qkey, qtext = _oracle_literal_args(fn, arg, pos)
        return LiteralValue(frozenset(
            f.value for _, f in scan.attrs
            if f.entity in inputs[0].ids and f.key == key
            and any(k == qkey and _matches(v, qtext) for k, v in f.qualifiers)))
    if fn is F.QueryRelation:
        restrict = None
        if arg.strip():
            restrict = scan.relation_named(split_relation_arg(arg)[0])
            if restrict is None:
                raise ResolutionError(f"no relation named {arg!r}", pos)
        return Text(frozenset(
            kb.relation_labels[r] for _, (h, r, t) in scan.triples
            if h in inputs[0].ids and t in inputs[1].ids and (restrict is None or r == restrict)))
    if fn in (F.SelectBetween, F.SelectAmong):
        key, op = _oracle_literal_args(fn, arg, pos)
        pool = inputs[0].ids | inputs[1].ids if fn is F.SelectBetween else inputs[0].ids
        largest = op in ("greater", "largest")
        scored = []
        for e in scan.entities:
            if e not in pool:
                continue
            vals = [f.value.numeric() for _, f in scan.attrs if f.entity == e and f.key == key]
            vals = [v for v in vals if v is not None]
            if vals:
                scored.append((max(vals) if largest else min(vals), e))
        if not scored:
            return Text(frozenset())
        target = max(v for v, _ in scored) if largest else min(v for v, _ in scored)
        winner = min(e for v, e in scored if v == target)
        return Text(frozenset({kb.entity_labels[winner]}))
    if fn in (F.VerifyStr, F.VerifyNum, F.VerifyYear, F.VerifyDate):
        parts = _oracle_literal_args(fn, arg, pos)
        op = parts[1] if len(parts) > 1 else "="
        given = _parse(_FILTER_KIND[fn], parts[0], pos)
        return Boolean(any(compare_literals(v, given, op) for v in inputs[0].values))
    if fn is F.QueryAttrQualifier:
        key, vtext, qkey = _oracle_literal_args(fn, arg, pos)
        return LiteralValue(frozenset(
            v for _, f in scan.attrs
            if f.entity in inputs[0].ids and f.key == key and _matches(f.value, vtext)
            for k, v in f.qualifiers if k == qkey))
    if fn is F.QueryRelationQualifier:
        pred, qkey = _oracle_literal_args(fn, arg, pos)
        r = scan.relation_named(pred)
        if r is None:
            raise ResolutionError(f"no relation named {pred!r}", pos)
        return LiteralValue(frozenset(
            v for i, (h, rr, t) in scan.triples
            if rr == r and h in inputs[0].ids and t in inputs[1].ids
            for k, v in kb.triple_qualifiers[i] if k == qkey))
    raise StackError(f"control token {fn.name} inside a program", pos)


def brute_force_oracle(program: Program, kb: KnowledgeBase) -> ExecutionResult:
    """Reference semantics by exhaustive scanning. Same contract as :func:`execute`."""
    depth = 0
    for pos, fn in enumerate(program.functions):
        need = len(FUNCTIONS[fn].inputs)
        if fn.is_control or depth < need:
            raise StackError(f"bad stack at {fn.name}", pos)
        depth = depth - need + 1
    if depth != 1:
        raise StackError(f"{depth} values remain", len(program))
    kinds = []
    for pos, fn in enumerate(program.functions):
        need = FUNCTIONS[fn].inputs
        top = kinds[len(kinds) - len(need):] if need else []
        if any(not h.satisfies(w) for h, w in zip(top, need)):
            raise TypeMismatchError(f"{fn.name}: kind mismatch", pos)
        kinds = kinds[:len(kinds) - len(need)] + [FUNCTIONS[fn].output]
    scan = _Scan(kb)
    stack = []
    for pos, (fn, arg) in enumerate(program):
        n = len(FUNCTIONS[fn].inputs)
        inputs = stack[len(stack) - n:] if n else []
        stack = stack[:len(stack) - n]
        stack.append(_oracle_step(scan, fn, arg, inputs, pos))
    return ExecutionResult(stack[0], render_answers(stack[0], kb))
