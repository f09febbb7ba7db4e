"""Finite-difference helpers shared by the gradient-check tests."""

import numpy as np

from progtransfer.program import FunctionKind
from progtransfer.pruning import ArgumentStep
from progtransfer.randomgen import random_program
from progtransfer.sketch_parser import ModelConfig, ParserModel, Vocabulary
from progtransfer.trainer import TrainItem
from progtransfer.program import ArgumentCategory

EPS = 1e-5
TOL = 1e-4

WORDS = ["what", "team", "plays", "in", "stadium", "city", "of", "the", "who", "is", "player",
         "arena", "located", "how", "many", "fc", "barcelona", "camp", "nou", "born"]


def tiny_model(rng: np.random.Generator, std: float = 0.5, vocab_words=WORDS) -> ParserModel:
    """Small model with every parameter drawn from normal(0, std).

    Sizes differ from each other so the residual and adapter matrices exist.
    """
    vocab = Vocabulary(sorted(set(vocab_words)))
    cfg = ModelConfig(vocab_size=len(vocab), emb_dim=5, enc_hidden=4, d_hat=6, d=5, mlp_hidden=7,
                      max_len=12, seed=int(rng.integers(1 << 30)), emb_scale=1.0)
    model = ParserModel(cfg, vocab)
    for name, value in model.params.items():
        value[...] = rng.normal(0.0, std, size=value.shape)
    return model


def random_question(rng: np.random.Generator, vocab_words=WORDS) -> str:
    n = int(rng.integers(1, 7))
    words = [vocab_words[int(i)] for i in rng.integers(0, len(vocab_words), n)]
    if rng.random() < 0.2:
        words.append("zzz")  # out of vocabulary
    return " ".join(words)


def random_sketch(kb, rng: np.random.Generator, max_len: int = 6) -> tuple:
    return random_program(kb, rng, max_len).sketch


def random_item(kb, rng: np.random.Generator) -> TrainItem:
    """A training item with random pools and choices over the KB's labels."""
    sketch = random_sketch(kb, rng)
    sizes = {ArgumentCategory.ENTITY: len(kb.entity_labels), ArgumentCategory.CONCEPT: len(kb.concept_labels),
             ArgumentCategory.RELATION: len(kb.relation_labels)}
    cats = list(sizes)
    steps = []
    for pos in range(len(sketch)):
        if rng.random() < 0.5:
            cat = cats[int(rng.integers(len(cats)))]
            k = int(rng.integers(1, sizes[cat] + 1))
            pool = tuple(sorted(int(i) for i in rng.choice(sizes[cat], k, replace=False)))
            steps.append(ArgumentStep(pos, cat, pool, pool[int(rng.integers(k))]))
    return TrainItem(random_question(rng), sketch, tuple(steps),
                     float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 2.0)), bool(rng.random() < 0.5))


def check_params(model: ParserModel, loss_fn, grads: dict, rng: np.random.Generator,
                 eps: float = EPS) -> dict:
    """Relative error of each parameter's analytic gradient along a random direction.

    ``loss_fn()`` must read the model's current parameters.
    """
    errors = {}
    for name, value in model.params.items():
        v = rng.normal(size=value.shape)
        value += eps * v
        up = loss_fn()
        value -= 2 * eps * v
        down = loss_fn()
        value += eps * v
        numeric = (up - down) / (2 * eps)
        analytic = float(np.sum(grads[name] * v))
        den = abs(numeric) + abs(analytic)
        errors[name] = 0.0 if den < 1e-9 else abs(numeric - analytic) / den
    return errors


def end_token() -> int:
    return int(FunctionKind.END)
