"""In-memory knowledge base with an ontology layer.

A knowledge base holds three id spaces (concepts, entities, relations), each
dense from 0, plus four fact stores:

    instanceOf    entity -> concepts          (type_of)
    subClassOf    concept -> parent concepts  (acyclic)
    triples       (head, relation, tail) with optional qualifiers
    attributes    (entity, key, literal value, qualifiers)

Relations also carry ``domain`` and ``range`` concept sets. Together with the
entity types these form the ontology used for candidate pruning.

The JSON layout read by :func:`load_kb` is::

    {
      "concepts":  [{"id": "c1", "label": "human"}, ...],
      "entities":  [{"id": "e1", "label": "Steve Bisciotti",
                     "instanceOf": ["c1"],
                     "attributes": [{"key": "height",
                                     "value": {"type": "quantity", "value": 180, "unit": "cm"},
                                     "qualifiers": [{"key": "...", "value": {...}}]}]}],
      "relations": [{"id": "r1", "label": "teams owned",
                     "domain": ["c1"], "range": ["c2"]}],
      "subClassOf": [["c2", "c5"]],
      "triples":   [["e1", "r1", "e2", [{"key": "...", "value": {...}}]]]
    }
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

__all__ = [
    "KBError",
    "KBFormatError",
    "UnknownElementError",
    "Literal",
    "AttributeFact",
    "KnowledgeBase",
    "KBBuilder",
    "normalize_label",
    "load_kb",
    "loads_kb",
    "dump_kb",
    "kb_to_json",
]


class KBError(Exception):
    """Base class for knowledge-base errors."""


class KBFormatError(KBError, ValueError):
    """The KB file is malformed. The message carries line or field context."""


class UnknownElementError(KBError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown element"


def normalize_label(text: str) -> str:
    """NFC-normalize, casefold and collapse whitespace."""
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


# ---------------------------------------------------------------------------
# Literals
# ---------------------------------------------------------------------------

LITERAL_KINDS = ("string", "quantity", "year", "date")


@dataclass(frozen=True, order=True)
class Literal:
    """A typed attribute or qualifier value.

    ``value`` is a ``str`` for strings, a finite ``float`` for quantities, an
    ``int`` for years and a :class:`datetime.date` for dates. ``unit`` is only
    meaningful for quantities.
    """

    kind: str
    value: Any
    unit: str = ""

    def __post_init__(self):
        if self.kind not in LITERAL_KINDS:
            raise ValueError(f"unknown literal kind {self.kind!r}")
        if self.kind == "quantity":
            v = float(self.value)
            if not math.isfinite(v):
                raise ValueError("quantity value must be finite")
            object.__setattr__(self, "value", v)
        elif self.kind == "year":
            if isinstance(self.value, bool) or int(self.value) != self.value:
                raise ValueError(f"year must be an integer, got {self.value!r}")
            object.__setattr__(self, "value", int(self.value))
        elif self.kind == "date":
            if not isinstance(self.value, _dt.date):
                raise ValueError("date literal needs a datetime.date")
        elif not isinstance(self.value, str):
            raise ValueError("string literal needs str")
        if self.kind != "quantity" and self.unit:
            raise ValueError("only quantities carry a unit")

    @classmethod
    def string(cls, text: str) -> "Literal":
        return cls("string", text)

    @classmethod
    def quantity(cls, value: float, unit: str = "") -> "Literal":
        return cls("quantity", value, unit)

    @classmethod
    def year(cls, value: int) -> "Literal":
        return cls("year", value)

    @classmethod
    def date(cls, value: _dt.date | str) -> "Literal":
        if isinstance(value, str):
            value = _dt.date.fromisoformat(value)
        return cls("date", value)

    @classmethod
    def parse_as(cls, kind: str, text: str) -> "Literal":
        """Parse program argument text as a literal of ``kind``.

        Raises ValueError if the text does not fit the kind.
        """
        text = text.strip()
        if kind == "string":
            return cls.string(text)
        if kind == "quantity":
            head, _, unit = text.partition(" ")
            try:
                num = float(head.replace(",", ""))
            except ValueError:
                raise ValueError(f"not a quantity: {text!r}") from None
            return cls.quantity(num, " ".join(unit.split()))
        if kind == "year":
            try:
                return cls.year(int(text))
            except ValueError:
                raise ValueError(f"not a year: {text!r}") from None
        if kind == "date":
            try:
                return cls.date(text)
            except ValueError:
                raise ValueError(f"not an ISO date: {text!r}") from None
        raise ValueError(f"unknown literal kind {kind!r}")

    def render(self) -> str:
        if self.kind == "string":
            return self.value
        if self.kind == "quantity":
            v = self.value
            num = str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
            return f"{num} {self.unit}" if self.unit else num
        if self.kind == "year":
            return str(self.value)
        return self.value.isoformat()

    def numeric(self) -> float | None:
        """Ordering key for comparisons; None for strings."""
        if self.kind == "quantity":
            return self.value
        if self.kind == "year":
            return float(self.value)
        if self.kind == "date":
            return float(self.value.toordinal())
        return None

    def to_json(self) -> dict:
        if self.kind == "quantity":
            return {"type": "quantity", "value": self.value, "unit": self.unit}
        if self.kind == "date":
            return {"type": "date", "value": self.value.isoformat()}
        return {"type": self.kind, "value": self.value}

    @classmethod
    def from_json(cls, obj: Any) -> "Literal":
        if not isinstance(obj, dict) or "type" not in obj or "value" not in obj:
            raise ValueError("literal must be an object with 'type' and 'value'")
        kind = obj["type"]
        if kind == "quantity":
            return cls.quantity(obj["value"], obj.get("unit", ""))
        if kind == "date":
            return cls.date(obj["value"])
        if kind == "year":
            return cls.year(obj["value"])
        if kind == "string":
            return cls.string(obj["value"])
        raise ValueError(f"unknown literal type {kind!r}")


def compare_literals(stored: Literal, given: Literal, op: str) -> bool:
    """Typed comparison ``stored <op> given``.

    Kinds must agree and quantities need identical units; otherwise the
    comparison is simply false.
    """
    if stored.kind != given.kind:
        return False
    if stored.kind == "string":
        a, b = normalize_label(stored.value), normalize_label(given.value)
        if op == "=":
            return a == b
        if op == "!=":
            return a != b
        return False
    if stored.kind == "quantity" and stored.unit != given.unit:
        return False
    a, b = stored.numeric(), given.numeric()
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    raise ValueError(f"unknown comparison operator {op!r}")


Qualifiers = tuple  # tuple[tuple[str, Literal], ...]


@dataclass(frozen=True)
class AttributeFact:
    entity: int
    key: str
    value: Literal
    qualifiers: Qualifiers = ()


# ---------------------------------------------------------------------------
# Knowledge base
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class KnowledgeBase:
    """Immutable KB. Build with :class:`KBBuilder` or :func:`load_kb`."""

    concept_labels: tuple = ()
    entity_labels: tuple = ()
    relation_labels: tuple = ()
    instance_of: tuple = ()  # per entity: frozenset of concept ids
    subclass_of: frozenset = frozenset()  # (child, parent) pairs
    triples: tuple = ()  # (head, relation, tail), deduplicated
    triple_qualifiers: tuple = ()  # parallel to triples
    attributes: tuple = ()  # AttributeFact
    relation_domain: tuple = ()  # per relation: frozenset of concept ids
    relation_range: tuple = ()
    # external string ids, only used for serialization
    concept_keys: tuple = field(default=(), compare=False)
    entity_keys: tuple = field(default=(), compare=False)
    relation_keys: tuple = field(default=(), compare=False)

    def __post_init__(self):
        self._check_invariants()
        self._build_indexes()

    # -- construction helpers ------------------------------------------------

    def _check_invariants(self) -> None:
        nc, ne, nr = len(self.concept_labels), len(self.entity_labels), len(self.relation_labels)
        if len(self.instance_of) != ne:
            raise KBError("instance_of must have one entry per entity")
        if len(self.relation_domain) != nr or len(self.relation_range) != nr:
            raise KBError("every relation needs domain and range entries")
        if len(self.triple_qualifiers) != len(self.triples):
            raise KBError("triple_qualifiers must parallel triples")
        for e, cs in enumerate(self.instance_of):
            for c in cs:
                if not 0 <= c < nc:
                    raise KBError(f"entity {e} has unknown type {c}")
        for a, b in self.subclass_of:
            if not (0 <= a < nc and 0 <= b < nc):
                raise KBError(f"subClassOf pair ({a}, {b}) out of range")
        for h, r, t in self.triples:
            if not (0 <= h < ne and 0 <= t < ne and 0 <= r < nr):
                raise KBError(f"triple ({h}, {r}, {t}) out of range")
        for r in range(nr):
            for c in self.relation_domain[r] | self.relation_range[r]:
                if not 0 <= c < nc:
                    raise KBError(f"relation {r} references unknown concept {c}")
        for fact in self.attributes:
            if not 0 <= fact.entity < ne:
                raise KBError(f"attribute on unknown entity {fact.entity}")
        for labels, what in ((self.concept_labels, "concept"), (self.relation_labels, "relation")):
            seen = {}
            for i, lab in enumerate(labels):
                if not lab.strip():
                    raise KBError(f"{what} {i} has an empty label")
                key = normalize_label(lab)
                if key in seen:
                    raise KBError(f"duplicate {what} label {lab!r} (ids {seen[key]} and {i})")
                seen[key] = i
        for i, lab in enumerate(self.entity_labels):
            if not lab.strip():
                raise KBError(f"entity {i} has an empty label")
        cycle = _find_cycle(nc, self.subclass_of)
        if cycle:
            names = " -> ".join(self.concept_labels[c] for c in cycle)
            raise KBError(f"cycle in subClassOf: {names}")

    def _build_indexes(self) -> None:
        setattr_ = object.__setattr__
        by_label = defaultdict(list)
        for i, lab in enumerate(self.entity_labels):
            by_label[normalize_label(lab)].append(i)
        setattr_(self, "_entity_by_label", {k: frozenset(v) for k, v in by_label.items()})
        setattr_(self, "_concept_by_label",
                 {normalize_label(l): i for i, l in enumerate(self.concept_labels)})
        setattr_(self, "_relation_by_label",
                 {normalize_label(l): i for i, l in enumerate(self.relation_labels)})

        children = defaultdict(set)
        for child, parent in self.subclass_of:
            children[parent].add(child)
        members = defaultdict(set)
        for e, cs in enumerate(self.instance_of):
            for c in cs:
                members[c].add(e)
        closure = {}
        for c in range(len(self.concept_labels)):
            stack, seen = [c], {c}
            while stack:
                for d in children[stack.pop()]:
                    if d not in seen:
                        seen.add(d)
                        stack.append(d)
            closure[c] = frozenset().union(*(members[d] for d in seen))
        setattr_(self, "_instances", closure)

        with_domain = defaultdict(set)
        for r, dom in enumerate(self.relation_domain):
            for c in dom:
                with_domain[c].add(r)
        setattr_(self, "_with_domain", {c: frozenset(v) for c, v in with_domain.items()})

        out_edges = defaultdict(list)
        in_edges = defaultdict(list)
        for i, (h, r, t) in enumerate(self.triples):
            out_edges[(h, r)].append(i)
            in_edges[(t, r)].append(i)
        setattr_(self, "_out", dict(out_edges))
        setattr_(self, "_in", dict(in_edges))
        setattr_(self, "_triple_index", {trip: i for i, trip in enumerate(self.triples)})

        attrs = defaultdict(list)
        for i, fact in enumerate(self.attributes):
            attrs[fact.entity].append(i)
        setattr_(self, "_attrs", dict(attrs))

    # -- sizes ---------------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_concepts(self) -> int:
        return len(self.concept_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    def all_entities(self) -> frozenset:
        return frozenset(range(self.num_entities))

    def all_concepts(self) -> frozenset:
        return frozenset(range(self.num_concepts))

    def all_relations(self) -> frozenset:
        return frozenset(range(self.num_relations))

    # -- checks --------------------------------------------------------------

    def _entity(self, e: int) -> int:
        if not (isinstance(e, int) and 0 <= e < self.num_entities):
            raise UnknownElementError(f"unknown entity id {e!r}")
        return e

    def _concept(self, c: int) -> int:
        if not (isinstance(c, int) and 0 <= c < self.num_concepts):
            raise UnknownElementError(f"unknown concept id {c!r}")
        return c

    def _relation(self, r: int) -> int:
        if not (isinstance(r, int) and 0 <= r < self.num_relations):
            raise UnknownElementError(f"unknown relation id {r!r}")
        return r

    # -- ontology operators --------------------------------------------------

    def type_of(self, e: int) -> frozenset:
        """Direct instanceOf concepts of ``e`` (no subClassOf closure)."""
        return self.instance_of[self._entity(e)]

    def range_of(self, r: int) -> frozenset:
        return self.relation_range[self._relation(r)]

    def domain_of(self, r: int) -> frozenset:
        return self.relation_domain[self._relation(r)]

    def relations_with_domain(self, c: int) -> frozenset:
        return self._with_domain.get(self._concept(c), frozenset())

    def instances_of(self, c: int) -> frozenset:
        """Entities typed with ``c`` or with any subclass of ``c``."""
        return self._instances[self._concept(c)]

    # -- label lookup --------------------------------------------------------

    def entities_named(self, label: str) -> frozenset:
        return self._entity_by_label.get(normalize_label(label), frozenset())

    def concept_named(self, label: str) -> int | None:
        return self._concept_by_label.get(normalize_label(label))

    def relation_named(self, label: str) -> int | None:
        return self._relation_by_label.get(normalize_label(label))

    def label(self, category: str, i: int) -> str:
        return {"entity": self.entity_labels, "concept": self.concept_labels,
                "relation": self.relation_labels}[category][i]

    # -- fact access (indexed) -----------------------------------------------

    def triples_from(self, h: int, r: int) -> list:
        """Indices of triples with head ``h`` and relation ``r``."""
        return self._out.get((h, r), [])

    def triples_to(self, t: int, r: int) -> list:
        return self._in.get((t, r), [])

    def triple_id(self, h: int, r: int, t: int) -> int | None:
        return self._triple_index.get((h, r, t))

    def attribute_facts(self, e: int) -> list:
        """Indices into ``attributes`` for entity ``e``."""
        return self._attrs.get(e, [])


def _find_cycle(n: int, edges: Iterable) -> list | None:
    graph = defaultdict(list)
    for a, b in sorted(edges):
        graph[a].append(b)
    colour = [0] * n
    for root in range(n):
        if colour[root]:
            continue
        path = [root]
        iters = [iter(graph[root])]
        colour[root] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                colour[path.pop()] = 2
                iters.pop()
            elif colour[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif colour[nxt] == 0:
                colour[nxt] = 1
                path.append(nxt)
                iters.append(iter(graph[nxt]))
    return None


class KBBuilder:
    """Mutable helper for assembling a :class:`KnowledgeBase`.

    >>> b = KBBuilder()
    >>> human = b.concept("human")
    >>> e = b.entity("Ada", types=[human])
    >>> kb = b.build()
    >>> kb.type_of(e) == {human}
    True
    """

    def __init__(self):
        self.concepts: list = []
        self.entities: list = []
        self.relations: list = []
        self.types: list = []
        self.subclass: set = set()
        self.domains: list = []
        self.ranges: list = []
        self.triples: dict = {}  # (h, r, t) -> list of qualifiers
        self.attributes: list = []
        self._concept_index: dict = {}
        self._relation_index: dict = {}

    def concept(self, label: str) -> int:
        key = normalize_label(label)
        if key in self._concept_index:
            return self._concept_index[key]
        self.concepts.append(label)
        self._concept_index[key] = len(self.concepts) - 1
        return len(self.concepts) - 1

    def entity(self, label: str, types: Iterable[int] = ()) -> int:
        self.entities.append(label)
        self.types.append(set(types))
        return len(self.entities) - 1

    def relation(self, label: str, domain: Iterable[int] = (), range_: Iterable[int] = ()) -> int:
        key = normalize_label(label)
        if key in self._relation_index:
            raise KBError(f"duplicate relation label {label!r}")
        self.relations.append(label)
        self.domains.append(set(domain))
        self.ranges.append(set(range_))
        self._relation_index[key] = len(self.relations) - 1
        return len(self.relations) - 1

    def add_type(self, e: int, c: int) -> None:
        self.types[e].add(c)

    def subclass_of(self, child: int, parent: int) -> None:
        self.subclass.add((child, parent))

    def triple(self, h: int, r: int, t: int, qualifiers: Iterable = ()) -> None:
        quals = self.triples.setdefault((h, r, t), [])
        for q in qualifiers:
            if q not in quals:
                quals.append(tuple(q))

    def attribute(self, e: int, key: str, value: Literal, qualifiers: Iterable = ()) -> None:
        fact = AttributeFact(e, key, value, tuple(tuple(q) for q in qualifiers))
        if fact not in self.attributes:
            self.attributes.append(fact)

    def build(self, concept_keys=None, entity_keys=None, relation_keys=None) -> KnowledgeBase:
        return KnowledgeBase(
            concept_labels=tuple(self.concepts),
            entity_labels=tuple(self.entities),
            relation_labels=tuple(self.relations),
            instance_of=tuple(frozenset(t) for t in self.types),
            subclass_of=frozenset(self.subclass),
            triples=tuple(self.triples),
            triple_qualifiers=tuple(tuple(q) for q in self.triples.values()),
            attributes=tuple(self.attributes),
            relation_domain=tuple(frozenset(d) for d in self.domains),
            relation_range=tuple(frozenset(r) for r in self.ranges),
            concept_keys=tuple(concept_keys or (f"c{i}" for i in range(len(self.concepts)))),
            entity_keys=tuple(entity_keys or (f"e{i}" for i in range(len(self.entities)))),
            relation_keys=tuple(relation_keys or (f"r{i}" for i in range(len(self.relations)))),
        )


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------


def _qualifiers_from_json(items, where: str) -> list:
    if items is None:
        return []
    if not isinstance(items, list):
        raise KBFormatError(f"{where}: qualifiers must be a list")
    out = []
    for j, q in enumerate(items):
        try:
            out.append((str(q["key"]), Literal.from_json(q["value"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise KBFormatError(f"{where}[{j}]: bad qualifier ({exc})") from None
    return out


def _kb_from_obj(obj: Any) -> KnowledgeBase:
    if not isinstance(obj, dict):
        raise KBFormatError("top level: expected a JSON object")
    unknown = set(obj) - {"concepts", "entities", "relations", "subClassOf", "triples"}
    if unknown:
        raise KBFormatError(f"top level: unknown keys {sorted(unknown)}")
    b = KBBuilder()
    ckeys, ekeys, rkeys = [], [], []
    cid, eid, rid = {}, {}, {}

    def lookup(table, key, where, what):
        try:
            return table[str(key)]
        except KeyError:
            raise KBFormatError(f"{where}: dangling {what} id {key!r}") from None

    def new_id(table, key, where):
        key = str(key)
        if key in table:
            raise KBFormatError(f"{where}: duplicate id {key!r}")
        return key

    for i, c in enumerate(obj.get("concepts", [])):
        where = f"concepts[{i}]"
        try:
            key, label = new_id(cid, c["id"], where), c["label"]
        except (KeyError, TypeError):
            raise KBFormatError(f"{where}: needs 'id' and 'label'") from None
        if not isinstance(label, str) or not label.strip():
            raise KBFormatError(f"{where}.label: must be a non-empty string")
        if normalize_label(label) in b._concept_index:
            raise KBFormatError(f"{where}.label: duplicate concept label {label!r}")
        cid[key] = b.concept(label)
        ckeys.append(key)

    entities = obj.get("entities", [])
    for i, e in enumerate(entities):
        where = f"entities[{i}]"
        try:
            key, label = new_id(eid, e["id"], where), e["label"]
        except (KeyError, TypeError):
            raise KBFormatError(f"{where}: needs 'id' and 'label'") from None
        if not isinstance(label, str) or not label.strip():
            raise KBFormatError(f"{where}.label: must be a non-empty string")
        types = [lookup(cid, c, f"{where}.instanceOf[{j}]", "concept")
                 for j, c in enumerate(e.get("instanceOf", []))]
        eid[key] = b.entity(label, types)
        ekeys.append(key)

    for i, e in enumerate(entities):
        for j, a in enumerate(e.get("attributes", []) or []):
            where = f"entities[{i}].attributes[{j}]"
            try:
                value = Literal.from_json(a["value"])
                attr_key = str(a["key"])
            except (KeyError, TypeError, ValueError) as exc:
                raise KBFormatError(f"{where}: bad attribute ({exc})") from None
            quals = _qualifiers_from_json(a.get("qualifiers"), f"{where}.qualifiers")
            b.attribute(eid[str(e["id"])], attr_key, value, quals)

    for i, r in enumerate(obj.get("relations", [])):
        where = f"relations[{i}]"
        try:
            key, label = new_id(rid, r["id"], where), r["label"]
        except (KeyError, TypeError):
            raise KBFormatError(f"{where}: needs 'id' and 'label'") from None
        if not isinstance(label, str) or not label.strip():
            raise KBFormatError(f"{where}.label: must be a non-empty string")
        if normalize_label(label) in b._relation_index:
            raise KBFormatError(f"{where}.label: duplicate relation label {label!r}")
        dom = [lookup(cid, c, f"{where}.domain[{j}]", "concept") for j, c in enumerate(r.get("domain", []))]
        ran = [lookup(cid, c, f"{where}.range[{j}]", "concept") for j, c in enumerate(r.get("range", []))]
        rid[key] = b.relation(label, dom, ran)
        rkeys.append(key)

    for i, pair in enumerate(obj.get("subClassOf", [])):
        where = f"subClassOf[{i}]"
        if not isinstance(pair, list) or len(pair) != 2:
            raise KBFormatError(f"{where}: expected [child, parent]")
        b.subclass_of(lookup(cid, pair[0], where, "concept"), lookup(cid, pair[1], where, "concept"))

    for i, t in enumerate(obj.get("triples", [])):
        where = f"triples[{i}]"
        if not isinstance(t, list) or len(t) not in (3, 4):
            raise KBFormatError(f"{where}: expected [head, relation, tail, qualifiers?]")
        h = lookup(eid, t[0], where, "entity")
        r = lookup(rid, t[1], where, "relation")
        tail = lookup(eid, t[2], where, "entity")
        quals = _qualifiers_from_json(t[3] if len(t) == 4 else None, f"{where}.qualifiers")
        b.triple(h, r, tail, quals)

    try:
        return b.build(ckeys, ekeys, rkeys)
    except KBError as exc:
        raise KBFormatError(str(exc)) from None


def loads_kb(text: str) -> KnowledgeBase:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KBFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return _kb_from_obj(obj)


def load_kb(path: str | Path) -> KnowledgeBase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise KBFormatError(f"{path}: not UTF-8 ({exc})") from None
    try:
        return loads_kb(text)
    except KBFormatError as exc:
        raise KBFormatError(f"{path}: {exc}") from None


def _qualifiers_to_json(quals) -> list:
    return [{"key": k, "value": v.to_json()} for k, v in quals]


def kb_to_json(kb: KnowledgeBase) -> dict:
    ck, ek, rk = kb.concept_keys, kb.entity_keys, kb.relation_keys
    attrs = defaultdict(list)
    for fact in kb.attributes:
        attrs[fact.entity].append({"key": fact.key, "value": fact.value.to_json(),
                                   "qualifiers": _qualifiers_to_json(fact.qualifiers)})
    return {
        "concepts": [{"id": ck[i], "label": lab} for i, lab in enumerate(kb.concept_labels)],
        "entities": [
            {"id": ek[i], "label": lab, "instanceOf": [ck[c] for c in sorted(kb.instance_of[i])],
             "attributes": attrs.get(i, [])}
            for i, lab in enumerate(kb.entity_labels)
        ],
        "relations": [
            {"id": rk[i], "label": lab, "domain": [ck[c] for c in sorted(kb.relation_domain[i])],
             "range": [ck[c] for c in sorted(kb.relation_range[i])]}
            for i, lab in enumerate(kb.relation_labels)
        ],
        "subClassOf": [[ck[a], ck[b]] for a, b in sorted(kb.subclass_of)],
        "triples": [
            [ek[h], rk[r], ek[t], _qualifiers_to_json(q)]
            for (h, r, t), q in zip(kb.triples, kb.triple_qualifiers)
        ],
    }


def dump_kb(kb: KnowledgeBase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(kb_to_json(kb), indent=1, ensure_ascii=False) + "\n",
                          encoding="utf-8")
