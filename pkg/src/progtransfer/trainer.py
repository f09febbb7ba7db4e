"""Pretraining, weakly supervised finetuning and evaluation.

Pretraining fits sketch and argument log-likelihood on question-program
pairs. Finetuning only sees question-answer pairs: Hard-EM searches
programs with the current model and trains on the best-scoring one;
REINFORCE samples programs and weights their log-likelihood by reward.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import nn
from .argument_parser import (
    ArgumentFill,
    fill_arguments,
    label_table,
    link_entities,
    sample_arguments,
    sketch_contexts,
)
from .executor import ExecutionError, execute
from .kb import KnowledgeBase, normalize_label
from .program import (
    ArgumentCategory,
    FunctionKind,
    Program,
    SketchState,
    program_from_json,
    program_to_json,
    validate,
)
from .pruning import PoolError, UnresolvedArgument, replay_program
from .sketch_parser import (
    ModelConfig,
    ParserModel,
    Vocabulary,
    beam_decode,
    greedy_decode,
    decoder_backward,
    decoder_forward,
    encode,
    encode_texts,
    encoder_backward,
    initial_state,
    decode_step,
    teacher_inputs,
)

log = logging.getLogger(__name__)

__all__ = [
    "DatasetExample",
    "DatasetError",
    "TrainConfig",
    "TrainItem",
    "load_dataset",
    "dump_dataset",
    "build_vocabulary",
    "prepare_model",
    "new_model",
    "batch_loss",
    "pretrain",
    "pretrain_items",
    "search_programs",
    "Candidate",
    "finetune_hard_em",
    "finetune_reinforce",
    "sample_sketches",
    "evaluate",
    "answer_f1",
    "TOPK",
    "exact_match",
    "format_report",
    "hard_em_select",
]

TOPK = (1, 2, 5, 10)


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetExample:
    question: str
    program: Program | None = None
    answers: tuple | None = None
    domain: str = ""
    spans: tuple | None = None  # literal arguments, in program order
    qid: str = ""

    def __post_init__(self):
        if self.program is None and self.answers is None:
            raise DatasetError(f"example {self.qid or self.question!r} has neither program nor answers")

    def to_json(self) -> dict:
        obj = {"question": self.question,
               "program": program_to_json(self.program) if self.program is not None else None,
               "answers": list(self.answers) if self.answers is not None else None}
        if self.domain:
            obj["domain"] = self.domain
        if self.spans is not None:
            obj["spans"] = list(self.spans)
        if self.qid:
            obj["id"] = self.qid
        return obj

    @classmethod
    def from_json(cls, obj: dict, where: str = "") -> "DatasetExample":
        if not isinstance(obj, dict) or not isinstance(obj.get("question"), str):
            raise DatasetError(f"{where}: expected an object with a 'question' string")
        unknown = set(obj) - {"question", "program", "answers", "domain", "spans", "id"}
        if unknown:
            raise DatasetError(f"{where}: unknown keys {sorted(unknown)}")
        try:
            program = program_from_json(obj["program"]) if obj.get("program") is not None else None
        except ValueError as exc:
            raise DatasetError(f"{where}.program: {exc}") from None
        answers = obj.get("answers")
        if answers is not None:
            if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
                raise DatasetError(f"{where}.answers: expected a list of strings")
            answers = tuple(answers)
        spans = obj.get("spans")
        if program is None and answers is None:
            raise DatasetError(f"{where}: example has neither program nor answers")
        return cls(obj["question"], program, answers, str(obj.get("domain", "")),
                   tuple(spans) if spans is not None else None, str(obj.get("id", "")))


def load_dataset(path: str | Path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc.msg}") from None
            out.append(DatasetExample.from_json(obj, f"{path}:{lineno}"))
    return out


def dump_dataset(examples: Iterable[DatasetExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def answer_f1(predicted: Iterable[str], gold: Iterable[str]) -> float:
    """F1 between answer sets after label normalization."""
    p = {normalize_label(a) for a in predicted}
    g = {normalize_label(a) for a in gold}
    hit = len(p & g)
    if not hit:
        return 0.0
    prec, rec = hit / len(p), hit / len(g)
    return 2 * prec * rec / (prec + rec)


# ---------------------------------------------------------------------------
# Configuration and model construction
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 60  # pretraining
    finetune_epochs: int = 8
    batch_size: int = 16
    beam: int = 5
    topk_args: int = 3
    eval_beam: int = 10
    lr_encoder: float = 1e-3
    lr_default: float = 1e-3
    weight_decay: float = 1e-5
    clip_norm: float = 5.0
    seed: int = 0
    strategy: str = "hard-em"
    reinforce_samples: int = 0  # 0: beam * topk_args, the Hard-EM execution budget
    reinforce_baseline: bool = True
    baseline_decay: float = 0.99
    emb_dim: int = 64
    emb_scale: float = 50.0
    hidden: int = 64
    max_len: int = 24
    no_pretrain: bool = False
    no_pretrain_args: bool = False
    no_finetune: bool = False
    no_ontology: bool = False

    def __post_init__(self):
        for name in ("batch_size", "beam", "topk_args", "eval_beam", "emb_dim", "hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs", "finetune_epochs", "reinforce_samples"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("lr_encoder", "lr_default"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.strategy not in ("hard-em", "reinforce"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline_decay must be in [0, 1)")

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def prune(self) -> bool:
        return not self.no_ontology

    def optimizer(self) -> nn.AdamW:
        return nn.AdamW({"encoder": self.lr_encoder, "default": self.lr_default},
                        weight_decay=self.weight_decay, clip_norm=self.clip_norm)


def build_vocabulary(examples: Iterable[DatasetExample], kbs: Iterable[KnowledgeBase]) -> Vocabulary:
    """Vocabulary over question texts and KB labels (surface words only)."""
    texts = [ex.question for ex in examples]
    for kb in kbs:
        texts.extend(kb_texts(kb))
    return Vocabulary.build(texts)


def kb_texts(kb: KnowledgeBase) -> list:
    return list(kb.entity_labels) + list(kb.concept_labels) + list(kb.relation_labels)


def prepare_model(model: ParserModel, examples: Iterable[DatasetExample], kb: KnowledgeBase) -> int:
    """Extend the vocabulary with the words of ``examples`` and ``kb`` labels."""
    return model.extend_vocabulary([ex.question for ex in examples] + kb_texts(kb))


def new_model(vocab: Vocabulary, config: TrainConfig) -> ParserModel:
    h = config.hidden
    return ParserModel(ModelConfig(vocab_size=len(vocab), emb_dim=config.emb_dim, enc_hidden=h, d_hat=h,
                                   d=h, mlp_hidden=h, max_len=config.max_len, seed=config.seed,
                                   emb_scale=config.emb_scale), vocab)


# ---------------------------------------------------------------------------
# Batched loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainItem:
    """One weighted training target: a sketch and its argument choices."""

    question: str
    sketch: tuple
    steps: tuple  # ArgumentStep
    sketch_weight: float = 1.0
    arg_weight: float = 1.0
    masked: bool = False  # renormalize over grammatical tokens


def _grammar_mask(sketch: Sequence[FunctionKind]) -> np.ndarray:
    state = SketchState(typed=True)
    rows = []
    for fn in list(sketch) + [FunctionKind.END]:
        row = np.zeros(len(FunctionKind), dtype=bool)
        for ok in state.allowed():
            row[int(ok)] = True
        rows.append(row)
        if not row[int(fn)]:
            raise ValueError(f"{fn.name} is not allowed at this point of the sketch")
        state = state.push(fn)
    return np.array(rows)


def batch_loss(model: ParserModel, kb: KnowledgeBase, items: Sequence[TrainItem],
               grads: dict | None = None) -> tuple:
    """Weighted sketch and argument negative log-likelihood of ``items``.

    Returns ``(sketch_loss, argument_loss)`` summed over items (weights
    applied). If ``grads`` is given, gradients are accumulated into it.
    """
    if not items:
        return 0.0, 0.0
    enc = encode_texts([it.question for it in items], model)
    inputs, targets, mask = teacher_inputs([list(it.sketch) for it in items])
    logits, G, cache = decoder_forward(model, enc, inputs)
    dlogits = np.zeros_like(logits)
    sketch_loss = 0.0
    for i, it in enumerate(items):
        if it.sketch_weight == 0:
            continue
        n = int(mask[i].sum())
        cmask = _grammar_mask(it.sketch) if it.masked else None
        loss, dl, _ = nn.softmax_xent(logits[i, :n], targets[i, :n], cmask)
        sketch_loss += it.sketch_weight * loss
        dlogits[i, :n] = it.sketch_weight * dl

    # candidate label encodings for every pool in the batch
    needed = {cat: set() for cat in (ArgumentCategory.ENTITY, ArgumentCategory.CONCEPT,
                                     ArgumentCategory.RELATION)}
    for it in items:
        if it.arg_weight:
            for st in it.steps:
                needed[st.category].update(st.pool)
    label_enc, row_of = {}, {}
    for cat, ids in needed.items():
        if not ids:
            continue
        ids = sorted(ids)
        labels = {ArgumentCategory.ENTITY: kb.entity_labels, ArgumentCategory.CONCEPT: kb.concept_labels,
                  ArgumentCategory.RELATION: kb.relation_labels}[cat]
        label_enc[cat] = encode_texts([labels[j] for j in ids], model)
        row_of[cat] = {j: r for r, j in enumerate(ids)}
    dP = {cat: np.zeros_like(e.pooled) for cat, e in label_enc.items()}
    dG = np.zeros_like(G)
    arg_loss = 0.0
    for i, it in enumerate(items):
        if not it.arg_weight:
            continue
        for st in it.steps:
            rows = [row_of[st.category][j] for j in st.pool]
            P = label_enc[st.category].pooled[rows]
            g = G[i, st.position]
            gold = st.pool.index(st.choice)
            loss, dl, _ = nn.softmax_xent(P @ g, np.array([gold]))
            dl = it.arg_weight * dl[0]
            arg_loss += it.arg_weight * loss
            dG[i, st.position] += P.T @ dl
            np.add.at(dP[st.category], rows, np.outer(dl, g))

    if grads is not None:
        dvec, dpool = decoder_backward(model, enc, cache, dlogits, dG, grads)
        encoder_backward(model, enc, dvec, dpool, grads)
        for cat, e in label_enc.items():
            encoder_backward(model, e, None, dP[cat], grads)
    return sketch_loss, arg_loss


def _apply(model: ParserModel, kb: KnowledgeBase, items: Sequence[TrainItem], opt: nn.AdamW,
           scale: float = 1.0) -> tuple:
    grads = model.new_grads()
    losses = batch_loss(model, kb, items, grads)
    if not any(np.any(g) for g in grads.values()):
        return losses  # no signal: leave parameters (and moments) untouched
    model.store.accumulate(grads, scale)
    opt.step(model.store)
    return losses


def _batches(n: int, size: int, rng: np.random.Generator) -> list:
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


# ---------------------------------------------------------------------------
# Pretraining
# ---------------------------------------------------------------------------


def pretrain_items(examples: Sequence[DatasetExample], kb: KnowledgeBase, config: TrainConfig) -> list:
    """Training targets for source examples, with pools replayed along the gold programs."""
    items = []
    for idx, ex in enumerate(examples):
        name = ex.qid or f"#{idx}"
        if ex.program is None:
            raise DatasetError(f"example {name}: source examples need a program")
        bad = validate(ex.program.sketch, typed=True)
        if bad:
            raise DatasetError(f"example {name}: invalid program ({bad})")
        try:
            steps, _ = replay_program(ex.program, kb, config.prune, link_entities(ex.question, kb))
        except (UnresolvedArgument, PoolError) as exc:
            raise DatasetError(f"example {name}: {exc}") from None
        items.append(TrainItem(ex.question, ex.program.sketch, steps, 1.0,
                               0.0 if config.no_pretrain_args else 1.0))
    return items


def pretrain(examples: Sequence[DatasetExample], kb: KnowledgeBase, config: TrainConfig,
             model: ParserModel, on_epoch: Callable | None = None) -> list:
    """Supervised pretraining; returns per-epoch mean losses.

    ``on_epoch(epoch, record)`` is called after every epoch; a true return
    value stops training early.
    """
    items = pretrain_items(examples, kb, config)
    opt = config.optimizer()
    rng = np.random.default_rng([config.seed, 1])
    history = []
    for epoch in range(config.epochs):
        s_tot = a_tot = 0.0
        for batch in _batches(len(items), config.batch_size, rng):
            s, a = _apply(model, kb, [items[i] for i in batch], opt, 1.0 / len(batch))
            s_tot += s
            a_tot += a
        rec = {"epoch": epoch + 1, "sketch_loss": s_tot / len(items), "arg_loss": a_tot / len(items)}
        rec["loss"] = rec["sketch_loss"] + rec["arg_loss"]
        history.append(rec)
        log.info("pretrain epoch %d loss %.4f", epoch + 1, rec["loss"])
        if on_epoch and on_epoch(epoch + 1, rec):
            break
    return history


# ---------------------------------------------------------------------------
# Program search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    program: Program
    logprob: float  # sketch + arguments
    fill: ArgumentFill


def search_programs(question: str, model: ParserModel, kb: KnowledgeBase, beam: int, k: int,
                    prune: bool = True, spans: Sequence[str] | None = None) -> list:
    """Beam sketches expanded with their top-``k`` argument assignments.

    Sorted by total log-probability, ties by program text.
    """
    enc = encode(question, model)
    hyps = [h for h in beam_decode(question, model, beam, enc=enc) if h.finished and h.sketch]
    if not hyps:
        return []
    G = sketch_contexts(enc, [h.sketch for h in hyps], model)
    table = label_table(kb, model)
    entities = link_entities(question, kb)
    out = []
    for i, h in enumerate(hyps):
        fills = fill_arguments(question, h.sketch, kb, model, k, prune, spans, G[i], table, entities)
        out.extend(Candidate(f.program, h.logprob + f.logprob, f) for f in fills)
    out.sort(key=lambda c: (-c.logprob, str(c.program)))
    return out


def _run(program: Program, kb: KnowledgeBase) -> tuple | None:
    try:
        return execute(program, kb).answers
    except ExecutionError:
        return None


def _score(candidates: Sequence[Candidate], kb: KnowledgeBase, gold: Sequence[str]) -> list:
    seen, scores = {}, []
    for c in candidates:
        key = str(c.program)
        if key not in seen:
            answers = _run(c.program, kb)
            seen[key] = 0.0 if answers is None else answer_f1(answers, gold)
        scores.append(seen[key])
    return scores


def _answers_only(examples: Sequence[DatasetExample]) -> list:
    """Copies without gold programs, so finetuning cannot read them."""
    out = []
    for ex in examples:
        if ex.answers is None:
            raise DatasetError(f"example {ex.qid or ex.question!r}: finetuning needs answers")
        out.append(DatasetExample(ex.question, None, ex.answers, ex.domain, ex.spans, ex.qid))
    return out


# ---------------------------------------------------------------------------
# Hard-EM
# ---------------------------------------------------------------------------


def hard_em_select(candidates: Sequence[Candidate], scores: Sequence[float]) -> int | None:
    """Index of the max-F1 candidate (ties: higher log-prob, then order); None if all F1 are 0."""
    best = None
    for i, (c, f) in enumerate(zip(candidates, scores)):
        if f <= 0:
            continue
        if best is None or (f, c.logprob) > (scores[best], candidates[best].logprob):
            best = i
    return best


def finetune_hard_em(examples: Sequence[DatasetExample], kb: KnowledgeBase, config: TrainConfig,
                     model: ParserModel, on_epoch: Callable | None = None) -> list:
    """Hard-EM finetuning; returns per-epoch records (loss, skipped, mean best F1)."""
    data = _answers_only(examples)
    opt = config.optimizer()
    rng = np.random.default_rng([config.seed, 2])
    history = []
    for epoch in range(config.finetune_epochs):
        loss = 0.0
        skipped = 0
        found = []
        for batch in _batches(len(data), config.batch_size, rng):
            items = []
            for i in batch:
                ex = data[i]
                cands = search_programs(ex.question, model, kb, config.beam, config.topk_args,
                                        config.prune, ex.spans)
                scores = _score(cands, kb, ex.answers)
                pick = hard_em_select(cands, scores)
                if pick is None:
                    skipped += 1
                    found.append(0.0)
                    continue
                found.append(scores[pick])
                c = cands[pick]
                items.append(TrainItem(ex.question, c.program.sketch, c.fill.steps))
            if items:
                s, a = _apply(model, kb, items, opt, 1.0 / len(items))
                loss += s + a
        rec = {"epoch": epoch + 1, "loss": loss / len(data), "skipped": skipped,
               "search_f1": float(np.mean(found)) if found else 0.0}
        history.append(rec)
        log.info("hard-em epoch %d loss %.4f skipped %d", epoch + 1, rec["loss"], skipped)
        if on_epoch:
            on_epoch(epoch + 1, rec)
    return history


# ---------------------------------------------------------------------------
# REINFORCE
# ---------------------------------------------------------------------------


def sample_sketches(question: str, model: ParserModel, rng: np.random.Generator, n: int,
                    enc=None, temperature: float = 1.0) -> list:
    """``n`` sketches sampled in parallel from the grammar-masked policy.

    Returns ``[(tokens, logprob, finished)]``; temperature 0 is greedy.
    """
    enc = encode(question, model) if enc is None else enc
    state = initial_state(enc, model, n)
    grammars = [SketchState(typed=True) for _ in range(n)]
    tokens = [[] for _ in range(n)]
    logp = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    for _ in range(model.config.max_len):
        if not alive.any():
            break
        probs, state = decode_step(state, enc, model)
        last = state.last.copy()
        for i in np.flatnonzero(alive):
            allowed = np.zeros(len(FunctionKind), dtype=bool)
            for fn in grammars[i].allowed():
                allowed[int(fn)] = True
            q = probs[i] * allowed
            q = q / q.sum()
            if temperature == 0:
                tok = int(np.argmax(np.where(allowed, probs[i], -1.0)))
            else:
                w = np.where(allowed, q ** (1.0 / temperature), 0.0)
                tok = int(rng.choice(len(w), p=w / w.sum()))
            logp[i] += math.log(q[tok])
            fn = FunctionKind(tok)
            if fn is FunctionKind.END:
                alive[i] = False
            else:
                tokens[i].append(fn)
                grammars[i] = grammars[i].push(fn)
            last[i] = tok
        state.last = last
    return [(tuple(tokens[i]), float(logp[i]), not alive[i]) for i in range(n)]


def finetune_reinforce(examples: Sequence[DatasetExample], kb: KnowledgeBase, config: TrainConfig,
                       model: ParserModel, on_epoch: Callable | None = None) -> list:
    """Policy-gradient finetuning with F1 reward.

    Each example draws ``reinforce_samples`` programs (by default the same
    number of executions Hard-EM spends per example). The gradient of
    ``-(r - b) log p(program)`` is averaged over samples; ``b`` is an
    exponential moving average of rewards when the baseline is on.
    """
    data = _answers_only(examples)
    n = config.reinforce_samples or config.beam * config.topk_args
    opt = config.optimizer()
    rng = np.random.default_rng([config.seed, 3])
    baseline = 0.0
    history = []
    for epoch in range(config.finetune_epochs):
        rewards = []
        for batch in _batches(len(data), config.batch_size, rng):
            items = []
            for i in batch:
                ex = data[i]
                enc = encode(ex.question, model)
                samples = [s for s in sample_sketches(ex.question, model, rng, n, enc) if s[2] and s[0]]
                if not samples:
                    rewards.extend([0.0] * n)
                    continue
                G = sketch_contexts(enc, [s[0] for s in samples], model)
                table = label_table(kb, model)
                entities = link_entities(ex.question, kb)
                for j, (sk, _, _) in enumerate(samples):
                    fill = sample_arguments(ex.question, sk, kb, model, rng, config.prune, ex.spans,
                                            G[j], table, entities)
                    answers = _run(fill.program, kb)
                    r = 0.0 if answers is None else answer_f1(answers, ex.answers)
                    rewards.append(r)
                    adv = r - baseline if config.reinforce_baseline else r
                    if config.reinforce_baseline:
                        baseline = config.baseline_decay * baseline + (1 - config.baseline_decay) * r
                    if adv != 0:
                        items.append(TrainItem(ex.question, sk, fill.steps, adv, adv, masked=True))
                rewards.extend([0.0] * (n - len(samples)))
            if items:
                _apply(model, kb, items, opt, 1.0 / (n * len(batch)))
        rec = {"epoch": epoch + 1, "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
               "baseline": baseline}
        history.append(rec)
        log.info("reinforce epoch %d reward %.4f", epoch + 1, rec["mean_reward"])
        if on_epoch:
            on_epoch(epoch + 1, rec)
    return history


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _eval_one(args) -> dict:
    idx, ex, model, kb, config = args
    cands = search_programs(ex.question, model, kb, config.eval_beam, config.topk_args, config.prune,
                            ex.spans)[:max(TOPK)]
    scores = _score(cands, kb, ex.answers)
    top = _run(cands[0].program, kb) if cands else None
    predicted = sorted(top) if top else []
    rng = np.random.default_rng([config.seed, 4, idx])
    hit = 0.0
    if predicted:
        pick = predicted[int(rng.integers(len(predicted)))]
        gold = {normalize_label(a) for a in ex.answers}
        hit = float(normalize_label(pick) in gold)
    best = {}
    for k in TOPK:
        best[k] = max(scores[:k]) if scores else 0.0
    return {"id": ex.qid or str(idx), "f1": scores[0] if scores else 0.0, "hits1": hit,
            "program": str(cands[0].program) if cands else "", "best": best}


def evaluate(examples: Sequence[DatasetExample], kb: KnowledgeBase, model: ParserModel,
             config: TrainConfig, workers: int = 1) -> dict:
    """F1, Hits@1 and best-F1-in-top-k over ``examples`` (gold answers only)."""
    data = _answers_only(examples)
    if not data:
        raise DatasetError("cannot evaluate an empty dataset")
    jobs = [(i, ex, model, kb, config) for i, ex in enumerate(data)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_eval_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_eval_one(j) for j in jobs]
    report = {
        "n": len(rows),
        "f1": float(np.mean([r["f1"] for r in rows])),
        "hits1": float(np.mean([r["hits1"] for r in rows])),
        "topk_f1": {str(k): float(np.mean([r["best"][k] for r in rows])) for k in TOPK},
    }
    return {"metrics": report, "examples": rows}


def format_report(metrics: dict) -> str:
    lines = [f"{'examples':<12}{metrics['n']:>8}",
             f"{'F1':<12}{100 * metrics['f1']:>8.1f}",
             f"{'Hits@1':<12}{100 * metrics['hits1']:>8.1f}"]
    for k, v in metrics["topk_f1"].items():
        lines.append(f"{'top-' + k + ' F1':<12}{100 * v:>8.1f}")
    return "\n".join(lines)


def exact_match(examples: Sequence[DatasetExample], kb: KnowledgeBase, model: ParserModel,
                config: TrainConfig) -> dict:
    """Greedy sketch and full-program exact match against gold programs."""
    sketch_ok = prog_ok = 0
    for ex in examples:
        if ex.program is None:
            raise DatasetError(f"example {ex.qid or ex.question!r} has no gold program")
        hyp = greedy_decode(ex.question, model)
        if hyp.finished and hyp.sketch == ex.program.sketch:
            sketch_ok += 1
            fills = fill_arguments(ex.question, hyp.sketch, kb, model, 1, config.prune, ex.spans)
            prog_ok += fills[0].program == ex.program
    n = max(1, len(examples))
    return {"sketch": sketch_ok / n, "program": prog_ok / n}
