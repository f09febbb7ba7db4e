"""Argument filling from ontology-pruned candidate pools.

Each candidate KB element is encoded by running its label through the
question encoder and taking the pooled vector. For a sketch token with
context vector ``g_t`` the candidate distribution is ``softmax(P g_t)``
over the rows of the active pool, in ascending id order.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .kb import KnowledgeBase
from .program import ArgumentCategory, FunctionKind, Program
from .pruning import (
    ArgumentStep,
    CandidatePools,
    PoolError,
    active_pool,
    ensure_nonempty,
    init_pools,
    update_pools,
)
from .sketch_parser import (
    EncoderOutput,
    ParserModel,
    decoder_forward,
    encode,
    encode_texts,
    teacher_inputs,
    tokenize,
)

log = logging.getLogger(__name__)

__all__ = [
    "CandidateEncoding",
    "LabelTable",
    "label_table",
    "encode_candidates",
    "score_arguments",
    "ArgumentFill",
    "sketch_contexts",
    "fill_arguments",
    "sample_arguments",
    "link_entities",
    "argument_text",
    "LINKING_THRESHOLD",
]

LINKING_THRESHOLD = 1000
_CATEGORY_NAME = {ArgumentCategory.ENTITY: "entity", ArgumentCategory.CONCEPT: "concept",
                  ArgumentCategory.RELATION: "relation"}


def _labels(kb: KnowledgeBase, category: ArgumentCategory) -> tuple:
    return {ArgumentCategory.ENTITY: kb.entity_labels, ArgumentCategory.CONCEPT: kb.concept_labels,
            ArgumentCategory.RELATION: kb.relation_labels}[category]


@dataclass(frozen=True)
class CandidateEncoding:
    ids: tuple  # ascending
    matrix: np.ndarray  # (len(ids), d_hat)


class LabelTable:
    """Pooled label vectors for every element of a KB, per category.

    Valid for one parameter version of the model; rebuilt lazily.
    """

    def __init__(self, kb: KnowledgeBase, model: ParserModel, chunk: int = 512):
        self.version = model.store.version
        self.rows = {}
        for cat in _CATEGORY_NAME:
            labels = _labels(kb, cat)
            if not labels:
                self.rows[cat] = np.zeros((0, model.config.d_hat))
                continue
            parts = [encode_texts(labels[i:i + chunk], model).pooled for i in range(0, len(labels), chunk)]
            self.rows[cat] = np.concatenate(parts, axis=0)

    def encoding(self, pool: Sequence[int], category: ArgumentCategory) -> CandidateEncoding:
        ids = tuple(sorted(pool))
        if not ids:
            raise PoolError(f"empty {category.value} pool; apply the fallback first")
        return CandidateEncoding(ids, self.rows[category][list(ids)])


def label_table(kb: KnowledgeBase, model: ParserModel) -> LabelTable:
    """Cached :class:`LabelTable` for the current parameters."""
    cache = model._label_cache
    key = id(kb)
    table = cache.get(key)
    if table is None or table[1].version != model.store.version or table[0] is not kb:
        if len(cache) > 8:
            cache.clear()
        table = (kb, LabelTable(kb, model))
        cache[key] = table
    return table[1]


def encode_candidates(pool: Sequence[int], category: ArgumentCategory, kb: KnowledgeBase,
                      model: ParserModel) -> CandidateEncoding:
    """Encode the labels of ``pool`` with the shared question encoder.

    Each row depends only on its own label.
    """
    ids = tuple(sorted(pool))
    if not ids:
        raise PoolError(f"empty {category.value} pool; apply the fallback first")
    labels = _labels(kb, category)
    return CandidateEncoding(ids, encode_texts([labels[i] for i in ids], model).pooled)


def score_arguments(g: np.ndarray, enc: CandidateEncoding) -> np.ndarray:
    """``softmax(P g)`` over the pool rows."""
    if enc.matrix.shape[1] != g.shape[-1]:
        raise ValueError(f"context size {g.shape[-1]} does not match candidate size {enc.matrix.shape[1]}")
    return nn.softmax(enc.matrix @ g)


def argument_text(fn: FunctionKind, ident: int, kb: KnowledgeBase) -> str:
    cat = fn.category
    if cat is ArgumentCategory.ENTITY:
        return kb.entity_labels[ident]
    if cat is ArgumentCategory.CONCEPT:
        return kb.concept_labels[ident]
    if fn is FunctionKind.Relate:
        return f"{kb.relation_labels[ident]} forward"
    return kb.relation_labels[ident]


def link_entities(question: str, kb: KnowledgeBase, threshold: int = LINKING_THRESHOLD) -> frozenset | None:
    """Entities sharing a token with ``question``, for KBs above ``threshold``.

    Returns None (no restriction) for small KBs or when nothing matches.
    """
    if kb.num_entities <= threshold:
        return None
    words = set(tokenize(question))
    hits = frozenset(e for e, lab in enumerate(kb.entity_labels) if words & set(tokenize(lab)))
    if not hits:
        return None
    log.debug("entity linking kept %d of %d entities", len(hits), kb.num_entities)
    return hits


@dataclass(frozen=True)
class ArgumentFill:
    program: Program
    logprob: float  # argument log-probability only
    steps: tuple  # ArgumentStep per scored argument
    fallbacks: int = 0


def sketch_contexts(enc: EncoderOutput, sketches: Sequence[Sequence[FunctionKind]],
                    model: ParserModel) -> np.ndarray:
    """``g_t`` for every token of each sketch, shape (B, L, d_hat).

    ``enc`` holds a single question; it is shared across the sketches.
    """
    inputs, _, _ = teacher_inputs([list(s) for s in sketches])
    B = len(sketches)
    n = int(enc.mask[0].sum())
    shared = EncoderOutput(np.repeat(enc.vectors[:1, :n], B, axis=0), np.repeat(enc.mask[:1, :n], B, axis=0),
                           np.repeat(enc.pooled[:1], B, axis=0))
    _, G, _ = decoder_forward(model, shared, inputs)
    return G


def _literal(spans, used):
    if spans is not None and used < len(spans):
        return spans[used]
    return ""


@dataclass
class _Partial:
    logprob: float
    args: list
    steps: list
    pools: CandidatePools

    @property
    def steps_key(self) -> tuple:
        return tuple(s.choice for s in self.steps)


def fill_arguments(question: str, sketch: Sequence[FunctionKind], kb: KnowledgeBase, model: ParserModel,
                   k: int = 3, prune: bool = True, spans: Sequence[str] | None = None,
                   G: np.ndarray | None = None, table: LabelTable | None = None,
                   entities: frozenset | None = None) -> list:
    """Top-``k`` argument assignments for ``sketch``, best first.

    Arguments are chosen left to right with a width-``k`` beam; after each
    choice the pools are updated so later steps only see consistent
    candidates. ``G`` (L, d_hat) may carry precomputed contexts. Literal
    arguments come from ``spans`` in order; QueryRelation keeps an empty
    argument. Ties are broken by the smaller id sequence.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sketch = [FunctionKind(f) for f in sketch]
    if G is None:
        G = sketch_contexts(encode(question, model), [sketch], model)[0]
    if table is None:
        table = label_table(kb, model)
    if entities is None:
        entities = link_entities(question, kb)
    start = init_pools(kb, entities)
    beam = [_Partial(0.0, [], [], start)]
    literal_used = 0
    for t, fn in enumerate(sketch):
        cat = fn.category
        if not cat.is_kb or fn is FunctionKind.QueryRelation:
            text = _literal(spans, literal_used) if cat is ArgumentCategory.LITERAL else ""
            literal_used += cat is ArgumentCategory.LITERAL
            for hyp in beam:
                hyp.args.append(text)
            continue
        cands = []
        for bi, hyp in enumerate(beam):
            pools = ensure_nonempty(hyp.pools, fn, kb) if prune else start
            pool = active_pool(pools, fn)
            if not pool:
                raise PoolError(f"{cat.value} pool is empty even after fallback")
            enc = table.encoding(pool, cat)
            logp = nn.log_softmax(enc.matrix @ G[t])
            top = np.argsort(-logp, kind="stable")[:k]
            for j in top:
                cands.append((hyp.logprob + float(logp[j]), bi, int(enc.ids[j]), pools, enc.ids))
        best = heapq.nsmallest(k, cands, key=lambda c: (-c[0], beam[c[1]].steps_key + (c[2],)))
        new_beam = []
        for score, bi, ident, pools, ids in best:
            hyp = beam[bi]
            nxt = update_pools(pools, fn, ident, kb) if prune else pools
            p = _Partial(score, hyp.args + [argument_text(fn, ident, kb)],
                         hyp.steps + [ArgumentStep(t, cat, ids, ident)], nxt)
            new_beam.append(p)
        beam = new_beam
    out = []
    for hyp in beam:
        out.append(ArgumentFill(Program(tuple(sketch), tuple(hyp.args)), hyp.logprob, tuple(hyp.steps),
                                hyp.pools.fallbacks))
    out.sort(key=lambda f: (-f.logprob, tuple(s.choice for s in f.steps)))
    return out


def sample_arguments(question: str, sketch: Sequence[FunctionKind], kb: KnowledgeBase, model: ParserModel,
                     rng: np.random.Generator, prune: bool = True, spans: Sequence[str] | None = None,
                     G: np.ndarray | None = None, table: LabelTable | None = None,
                     entities: frozenset | None = None, temperature: float = 1.0) -> ArgumentFill:
    """Sample one argument assignment; temperature 0 takes the argmax."""
    sketch = [FunctionKind(f) for f in sketch]
    if G is None:
        G = sketch_contexts(encode(question, model), [sketch], model)[0]
    if table is None:
        table = label_table(kb, model)
    if entities is None:
        entities = link_entities(question, kb)
    start = init_pools(kb, entities)
    pools, args, steps, total = start, [], [], 0.0
    literal_used = 0
    for t, fn in enumerate(sketch):
        cat = fn.category
        if not cat.is_kb or fn is FunctionKind.QueryRelation:
            args.append(_literal(spans, literal_used) if cat is ArgumentCategory.LITERAL else "")
            literal_used += cat is ArgumentCategory.LITERAL
            continue
        if prune:
            pools = ensure_nonempty(pools, fn, kb)
        pool = active_pool(pools if prune else start, fn)
        enc = table.encoding(pool, cat)
        logp = nn.log_softmax(enc.matrix @ G[t])
        if temperature == 0:
            j = int(np.argmax(logp))
        else:
            j = int(rng.choice(len(logp), p=nn.softmax(logp / temperature)))
        ident = enc.ids[j]
        total += float(logp[j])
        args.append(argument_text(fn, ident, kb))
        steps.append(ArgumentStep(t, cat, enc.ids, ident))
        if prune:
            pools = update_pools(pools, fn, ident, kb)
    return ArgumentFill(Program(tuple(sketch), tuple(args)), total, tuple(steps), pools.fallbacks)
