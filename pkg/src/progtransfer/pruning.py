"""Ontology-guided candidate pools and search-space accounting.

Three pools are kept while arguments are chosen left to right:

* an entity argument ``e`` sets the concept pool to ``type_of(e)`` and the
  relation pool to the relations whose domain meets that concept pool;
* a relation argument ``r`` sets the concept pool to ``range_of(r)``;
* a concept argument ``c`` sets the relation pool to
  ``relations_with_domain(c)``.

The entity pool is never narrowed. When a pool comes up empty (incomplete
ontologies) :func:`fallback` resets it to the full category and logs it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .kb import KnowledgeBase
from .program import ArgumentCategory, FunctionKind, Program, split_relation_arg

log = logging.getLogger(__name__)

__all__ = [
    "PoolError",
    "PoolEvent",
    "CandidatePools",
    "init_pools",
    "active_pool",
    "update_pools",
    "fallback",
    "ensure_nonempty",
    "search_space_size",
    "SearchSpace",
    "UnresolvedArgument",
    "resolve_argument",
    "ArgumentStep",
    "replay_program",
]


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class PoolEvent:
    kind: str  # "update" or "fallback"
    category: ArgumentCategory
    step: FunctionKind | None = None
    argument: int | None = None


@dataclass(frozen=True)
class CandidatePools:
    entities: frozenset
    relations: frozenset
    concepts: frozenset
    events: tuple = ()

    def get(self, category: ArgumentCategory) -> frozenset | None:
        if category is ArgumentCategory.ENTITY:
            return self.entities
        if category is ArgumentCategory.RELATION:
            return self.relations
        if category is ArgumentCategory.CONCEPT:
            return self.concepts
        return None

    @property
    def fallbacks(self) -> int:
        return sum(ev.kind == "fallback" for ev in self.events)


def init_pools(kb: KnowledgeBase, entities: frozenset | None = None) -> CandidatePools:
    """Full pools. ``entities`` optionally pre-restricts the entity pool."""
    return CandidatePools(
        entities=kb.all_entities() if entities is None else frozenset(entities),
        relations=kb.all_relations(),
        concepts=kb.all_concepts(),
    )


def active_pool(pools: CandidatePools, fn: FunctionKind) -> frozenset | None:
    return pools.get(fn.category)


def update_pools(pools: CandidatePools, fn: FunctionKind, arg: int | None,
                 kb: KnowledgeBase) -> CandidatePools:
    cat = fn.category
    if not cat.is_kb:
        return pools
    pool = pools.get(cat)
    if arg not in pool:
        raise PoolError(f"{fn.name} argument {arg!r} is outside the active {cat.value} pool")
    event = PoolEvent("update", cat, fn, arg)
    if cat is ArgumentCategory.ENTITY:
        concepts = kb.type_of(arg)
        relations = frozenset().union(*(kb.relations_with_domain(c) for c in concepts))
        return replace(pools, concepts=concepts, relations=relations, events=pools.events + (event,))
    if cat is ArgumentCategory.RELATION:
        return replace(pools, concepts=kb.range_of(arg), events=pools.events + (event,))
    return replace(pools, relations=kb.relations_with_domain(arg), events=pools.events + (event,))


def fallback(pools: CandidatePools, category: ArgumentCategory, kb: KnowledgeBase) -> CandidatePools:
    """Reset an empty pool to its full category."""
    pool = pools.get(category)
    if pool is None:
        raise PoolError(f"no pool for category {category.value}")
    if pool:
        raise PoolError(f"{category.value} pool is not empty ({len(pool)} members)")
    event = PoolEvent("fallback", category)
    log.debug("candidate pool fallback for %s", category.value)
    full = {ArgumentCategory.ENTITY: kb.all_entities(),
            ArgumentCategory.RELATION: kb.all_relations(),
            ArgumentCategory.CONCEPT: kb.all_concepts()}[category]
    field_name = {ArgumentCategory.ENTITY: "entities", ArgumentCategory.RELATION: "relations",
                  ArgumentCategory.CONCEPT: "concepts"}[category]
    return replace(pools, events=pools.events + (event,), **{field_name: full})


def ensure_nonempty(pools: CandidatePools, fn: FunctionKind, kb: KnowledgeBase) -> CandidatePools:
    pool = active_pool(pools, fn)
    if pool is not None and not pool:
        return fallback(pools, fn.category, kb)
    return pools


@dataclass(frozen=True)
class SearchSpace:
    pruned: float
    unpruned: float
    pruned_no_entity: float
    unpruned_no_entity: float
    fallbacks: int

    @property
    def ratio(self) -> float:
        return self.pruned / self.unpruned if self.unpruned else 1.0


def search_space_size(sketch: Sequence[FunctionKind], kb: KnowledgeBase,
                      trace: Sequence[int]) -> SearchSpace:
    """Product of active-pool sizes over argument-taking steps.

    ``trace`` lists the chosen KB ids for the entity/concept/relation steps of
    ``sketch`` in order. Pools are replayed along it; the unpruned variant
    uses the full category sizes.
    """
    steps = [FunctionKind(fn) for fn in sketch if not FunctionKind(fn).is_control]
    arg_steps = [fn for fn in steps if fn.category.is_kb]
    if len(arg_steps) != len(trace):
        raise PoolError(f"trace has {len(trace)} choices for {len(arg_steps)} argument steps")
    full = {ArgumentCategory.ENTITY: kb.num_entities, ArgumentCategory.RELATION: kb.num_relations,
            ArgumentCategory.CONCEPT: kb.num_concepts}
    pools = init_pools(kb)
    pruned = unpruned = pruned_ne = unpruned_ne = 1
    for fn, arg in zip(arg_steps, trace):
        pools = ensure_nonempty(pools, fn, kb)
        size = len(active_pool(pools, fn))
        pruned *= size
        unpruned *= full[fn.category]
        if fn.category is not ArgumentCategory.ENTITY:
            pruned_ne *= size
            unpruned_ne *= full[fn.category]
        pools = update_pools(pools, fn, arg, kb)
    return SearchSpace(float(pruned), float(unpruned), float(pruned_ne), float(unpruned_ne),
                       pools.fallbacks)


class UnresolvedArgument(ValueError):
    pass


def resolve_argument(fn: FunctionKind, arg: str, kb: KnowledgeBase) -> int | None:
    """KB id named by a program argument, or None for steps without one.

    Find over a label shared by several entities resolves to the smallest id.
    QueryRelation with an empty argument has nothing to resolve.
    """
    cat = fn.category
    if not cat.is_kb or (fn is FunctionKind.QueryRelation and not arg.strip()):
        return None
    if cat is ArgumentCategory.ENTITY:
        ids = kb.entities_named(arg)
        if not ids:
            raise UnresolvedArgument(f"{fn.name}: no entity named {arg!r}")
        return min(ids)
    if cat is ArgumentCategory.CONCEPT:
        c = kb.concept_named(arg)
        if c is None:
            raise UnresolvedArgument(f"{fn.name}: no concept named {arg!r}")
        return c
    label = split_relation_arg(arg)[0] if fn is FunctionKind.Relate else arg
    r = kb.relation_named(label)
    if r is None:
        raise UnresolvedArgument(f"{fn.name}: no relation named {label!r}")
    return r


@dataclass(frozen=True)
class ArgumentStep:
    position: int  # index into the program
    category: ArgumentCategory
    pool: tuple  # ascending ids
    choice: int


def replay_program(program: Program, kb: KnowledgeBase, prune: bool = True,
                   entities: frozenset | None = None) -> tuple:
    """Pools seen by each argument step of ``program``.

    Returns ``(steps, pools)``. With ``prune`` off every pool is the full
    category (optionally ``entities`` for the entity pool). Raises
    :class:`UnresolvedArgument` or :class:`PoolError` for gold arguments that
    cannot be resolved or fall outside their pool.
    """
    pools = init_pools(kb, entities)
    full = pools
    steps = []
    for pos, (fn, arg) in enumerate(program):
        ident = resolve_argument(fn, arg, kb)
        if ident is None:
            continue
        if prune:
            pools = ensure_nonempty(pools, fn, kb)
            pool = active_pool(pools, fn)
        else:
            pool = active_pool(full, fn)
        if ident not in pool:
            raise PoolError(f"step {pos}: {fn.name} argument {arg!r} is outside its candidate pool")
        steps.append(ArgumentStep(pos, fn.category, tuple(sorted(pool)), ident))
        if prune:
            pools = update_pools(pools, fn, ident, kb)
    return tuple(steps), pools
