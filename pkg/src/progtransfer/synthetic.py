"""Synthetic source and target domains for transfer experiments.

Both domains share question templates (composition, conjunction, counting,
comparison) but draw entity, concept, relation and attribute labels from
disjoint pools of pseudo-words. Relation domains and ranges are derived
from the generated triples, so every template instance is ontology
consistent. Target questions lean harder on paraphrases.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .executor import execute
from .kb import KBBuilder, KnowledgeBase, Literal
from .program import Program
from .trainer import DatasetExample

__all__ = ["SyntheticConfig", "SyntheticDomains", "generate_synthetic_domains", "generate_domain",
           "pseudo_words", "TEMPLATES"]

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl",
           "kr", "pl", "st", "tr", "sk", "vl", "zh"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "n", "r", "l", "s", "k", "m"]


def pseudo_words(rng: np.random.Generator, n: int, forbidden: set = frozenset()) -> list:
    """``n`` distinct pronounceable nonsense words."""
    out, seen = [], set(forbidden)
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl)) + _CODAS[rng.integers(len(_CODAS))]
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


# Each template kind: canonical phrasing first, then paraphrases.
TEMPLATES = {
    "comp1": [
        "which {c} is the {r} of {e}",
        "what {c} is {r} of {e}",
        "name the {c} that is the {r} of {e}",
        "{e} has which {c} as its {r}",
        "tell me the {c} which serves as {r} for {e}",
    ],
    "comp1_implicit": [
        "what is the {r} of {e}",
        "{e} has what as its {r}",
        "give me the {r} of {e}",
    ],
    "comp2": [
        "which {c2} is the {r2} of the {c1} that is the {r1} of {e}",
        "what {c2} is {r2} of the {c1} which is {r1} of {e}",
        "name the {c2} that is the {r2} of the {c1} serving as {r1} for {e}",
    ],
    "conj": [
        "which {c} is the {r1} of {e1} and the {r2} of {e2}",
        "what {c} is {r1} of {e1} and also {r2} of {e2}",
        "name the {c} that is both the {r1} of {e1} and the {r2} of {e2}",
        "tell me the {c} which serves as {r1} for {e1} as well as {r2} for {e2}",
    ],
    "count": [
        "how many {c} are the {r} of {e}",
        "count the {c} that are {r} of {e}",
        "what is the number of {c} that serve as {r} for {e}",
    ],
    "compare": [
        "which {c} that is the {r} of {e} has the {op} {key}",
        "among the {c} that are {r} of {e} , which one has the {op} {key}",
        "of the {c} serving as {r} for {e} , name the one with the {op} {key}",
    ],
}

_KINDS = ("comp1", "comp2", "conj", "count", "compare")


@dataclass
class SyntheticConfig:
    seed: int = 0
    source_size: int = 200
    target_size: int = 200
    dev_size: int = 100
    concepts: int = 10
    parents: int = 2
    relations: int = 30
    entities_per_concept: int = 10
    attributes_per_concept: int = 1
    triple_rate: float = 0.6
    double_domain_rate: float = 0.4
    double_range_rate: float = 0.3
    implicit_rate: float = 0.25
    source_paraphrase_rate: float = 0.2
    target_paraphrase_rate: float = 0.6
    # comp1, comp2, conj, count, compare
    mix: tuple = (0.30, 0.15, 0.43, 0.06, 0.06)

    def __post_init__(self):
        self.mix = tuple(self.mix)
        for name in ("source_size", "target_size", "dev_size", "concepts", "relations",
                     "entities_per_concept"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.concepts < 2:
            raise ValueError("need at least two concepts")
        if len(self.mix) != len(_KINDS) or min(self.mix) < 0 or not sum(self.mix) > 0:
            raise ValueError(f"mix needs {len(_KINDS)} non-negative weights")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mix"] = list(self.mix)
        return d


@dataclass
class SyntheticDomains:
    kb_source: KnowledgeBase
    source: list
    kb_target: KnowledgeBase
    target_train: list
    target_dev: list
    hidden_programs: dict = field(default_factory=dict)  # target qid -> Program

    def __iter__(self):
        """Unpacks as ``(kb_source, source, kb_target, target)`` with train and dev joined."""
        return iter((self.kb_source, self.source, self.kb_target, self.target_train + self.target_dev))


class _Domain:
    def __init__(self, kb: KnowledgeBase, keys: dict):
        self.kb = kb
        self.keys = keys  # concept id -> attribute keys
        kb_types = kb.instance_of
        self.members = {}
        for e, cs in enumerate(kb_types):
            for c in cs:
                self.members.setdefault(c, []).append(e)
        self.out = {}
        self.inc = {}
        for h, r, t in kb.triples:
            self.out.setdefault(h, []).append((r, t))
            self.inc.setdefault(t, []).append((r, h))


def generate_domain(rng: np.random.Generator, cfg: SyntheticConfig, words: list) -> _Domain:
    """Build one KB from a private word list (consumed from the front)."""
    it = iter(words)

    def word():
        return next(it)

    b = KBBuilder()
    leaves = [b.concept(word()) for _ in range(cfg.concepts)]
    for p in range(min(cfg.parents, cfg.concepts // 2)):
        parent = b.concept(word())
        for child in leaves[p::max(1, cfg.parents)][:3]:
            b.subclass_of(child, parent)

    ents = {}
    for c in leaves:
        ents[c] = []
        for _ in range(cfg.entities_per_concept):
            parts = [word().capitalize() for _ in range(1 + int(rng.random() < 0.3))]
            ents[c].append(b.entity(" ".join(parts), [c]))

    keys = {}
    for c in leaves:
        keys[c] = [word() for _ in range(cfg.attributes_per_concept)]
        for e in ents[c]:
            for k in keys[c]:
                b.attribute(e, k, Literal.quantity(float(rng.integers(1, 1000)), ""))

    planned = []
    for _ in range(cfg.relations):
        n_dom = 1 + int(rng.random() < cfg.double_domain_rate)
        n_ran = 1 + int(rng.random() < cfg.double_range_rate)
        dom = list(rng.choice(leaves, size=n_dom, replace=False))
        ran = list(rng.choice(leaves, size=n_ran, replace=False))
        label = " ".join(word() for _ in range(1 + int(rng.random() < 0.4)))
        planned.append((label, [int(x) for x in dom], [int(x) for x in ran]))

    edges = []
    for label, dom, ran in planned:
        heads = [e for c in dom for e in ents[c]]
        tails = [e for c in ran for e in ents[c]]
        mine = []
        for h in heads:
            if rng.random() < cfg.triple_rate:
                for t in rng.choice(tails, size=min(len(tails), 1 + int(rng.random() < 0.3)), replace=False):
                    if int(t) != h:
                        mine.append((h, int(t)))
        if not mine:
            h = heads[int(rng.integers(len(heads)))]
            t = next(int(t) for t in rng.permutation(tails) if int(t) != h)
            mine.append((h, t))
        edges.append(mine)

    # domain and range follow the triples actually generated
    for (label, _, _), mine in zip(planned, edges):
        dom = {c for h, _ in mine for c in b.types[h]}
        ran = {c for _, t in mine for c in b.types[t]}
        r = b.relation(label, dom, ran)
        for h, t in mine:
            b.triple(h, r, t)
    return _Domain(b.build(), keys)


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _template(rng, kind, rate):
    opts = TEMPLATES[kind]
    if len(opts) > 1 and rng.random() < rate:
        return opts[1 + int(rng.integers(len(opts) - 1))]
    return opts[0]


def _instance(dom: _Domain, kind: str, rng: np.random.Generator, cfg: SyntheticConfig, rate: float):
    """One (question, program, spans) of ``kind`` or None if the draw failed."""
    kb = dom.kb
    E = lambda e: kb.entity_labels[e]
    C = lambda c: kb.concept_labels[c]
    R = lambda r: kb.relation_labels[r]
    heads = sorted(dom.out)
    if kind in ("comp1", "count", "compare"):
        e = _pick(rng, heads)
        r, t = _pick(rng, dom.out[e])
        c = _pick(rng, sorted(kb.type_of(t)))
        steps = [("Find", E(e)), ("Relate", f"{R(r)} forward"), ("FilterConcept", C(c))]
        if kind == "comp1":
            if len(kb.range_of(r)) == 1 and rng.random() < cfg.implicit_rate:
                q = _template(rng, "comp1_implicit", rate).format(r=R(r), e=E(e))
            else:
                q = _template(rng, "comp1", rate).format(c=C(c), r=R(r), e=E(e))
            return q, Program.of(steps), ()
        if kind == "count":
            steps.append(("Count", ""))
            return _template(rng, "count", rate).format(c=C(c), r=R(r), e=E(e)), Program.of(steps), ()
        key = _pick(rng, dom.keys[c])
        op = "largest" if rng.random() < 0.5 else "smallest"
        span = f"{key}|{op}"
        steps.append(("SelectAmong", span))
        q = _template(rng, "compare", rate).format(c=C(c), r=R(r), e=E(e), op=op, key=key)
        return q, Program.of(steps), (span,)
    if kind == "comp2":
        e = _pick(rng, heads)
        r1, m = _pick(rng, dom.out[e])
        if m not in dom.out:
            return None
        r2, t = _pick(rng, dom.out[m])
        c1 = _pick(rng, sorted(kb.type_of(m)))
        c2 = _pick(rng, sorted(kb.type_of(t)))
        steps = [("Find", E(e)), ("Relate", f"{R(r1)} forward"), ("FilterConcept", C(c1)),
                 ("Relate", f"{R(r2)} forward"), ("FilterConcept", C(c2))]
        q = _template(rng, "comp2", rate).format(c1=C(c1), c2=C(c2), r1=R(r1), r2=R(r2), e=E(e))
        return q, Program.of(steps), ()
    # conjunction: two incoming paths into one target
    targets = sorted(t for t, inc in dom.inc.items() if len({h for _, h in inc}) >= 2)
    if not targets:
        return None
    t = _pick(rng, targets)
    inc = dom.inc[t]
    r1, e1 = _pick(rng, inc)
    rest = [(r, h) for r, h in inc if h != e1]
    r2, e2 = _pick(rng, rest)
    c = _pick(rng, sorted(kb.type_of(t)))
    steps = [("Find", E(e1)), ("Relate", f"{R(r1)} forward"), ("Find", E(e2)),
             ("Relate", f"{R(r2)} forward"), ("And", ""), ("FilterConcept", C(c))]
    q = _template(rng, "conj", rate).format(c=C(c), r1=R(r1), e1=E(e1), r2=R(r2), e2=E(e2))
    return q, Program.of(steps), ()


def _dataset(dom: _Domain, n: int, rng, cfg: SyntheticConfig, rate: float, tag: str, start: int = 0) -> list:
    weights = np.array(cfg.mix, dtype=float)
    weights /= weights.sum()
    out, seen = [], set()
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n + 1000:
            raise RuntimeError(f"could not generate {n} distinct {tag} questions; enlarge the KB")
        kind = _KINDS[int(rng.choice(len(_KINDS), p=weights))]
        inst = _instance(dom, kind, rng, cfg, rate)
        if inst is None:
            continue
        q, program, spans = inst
        if q in seen:
            continue
        answers = execute(program, dom.kb).answers
        if not answers:
            continue
        seen.add(q)
        qid = f"{tag}-{start + len(out):05d}"
        out.append(DatasetExample(q, program, tuple(answers), tag, tuple(spans) if spans else None, qid))
    return out


def generate_synthetic_domains(cfg: SyntheticConfig) -> SyntheticDomains:
    """Source KB and question-program pairs; target KB and question-answer pairs.

    Target examples keep their programs only in ``hidden_programs``.
    """
    rng = np.random.default_rng(cfg.seed)
    per_domain = cfg.concepts * (cfg.entities_per_concept * 2 + cfg.attributes_per_concept + 1) \
        + cfg.parents + 2 * cfg.relations + 16
    pool = pseudo_words(rng, 2 * per_domain)
    src = generate_domain(rng, cfg, pool[:per_domain])
    tgt = generate_domain(rng, cfg, pool[per_domain:])
    source = _dataset(src, cfg.source_size, rng, cfg, cfg.source_paraphrase_rate, "source")
    target = _dataset(tgt, cfg.target_size + cfg.dev_size, rng, cfg, cfg.target_paraphrase_rate, "target")
    hidden = {ex.qid: ex.program for ex in target}
    strip = lambda ex: DatasetExample(ex.question, None, ex.answers, ex.domain, ex.spans, ex.qid)
    target = [strip(ex) for ex in target]
    return SyntheticDomains(src.kb, source, tgt.kb, target[:cfg.target_size], target[cfg.target_size:], hidden)
