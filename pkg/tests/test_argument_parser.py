import itertools

import numpy as np
import pytest

from progtransfer import nn
from progtransfer.argument_parser import (
    encode_candidates,
    fill_arguments,
    label_table,
    link_entities,
    sample_arguments,
    score_arguments,
    sketch_contexts,
)
from progtransfer.program import ArgumentCategory, FunctionKind, Program
from progtransfer.pruning import PoolError, active_pool, init_pools, replay_program
from progtransfer.sketch_parser import encode

from conftest import ids, rel_error
from gradcheck import random_question, random_sketch, tiny_model

F = FunctionKind
C = ArgumentCategory
N_INSTANCES = 100


@pytest.fixture
def model():
    return tiny_model(np.random.default_rng(0), std=0.5)


def test_encode_candidates_rows(kb1, model):
    one = encode_candidates([2], C.CONCEPT, kb1, model)
    assert one.ids == (2,) and one.matrix.shape == (1, model.config.d_hat)
    full = encode_candidates([4, 0, 2], C.CONCEPT, kb1, model)
    assert full.ids == (0, 2, 4)
    # each row depends only on its own label
    assert np.allclose(full.matrix[1], one.matrix[0], atol=1e-12)
    assert np.allclose(full.matrix[0], encode(kb1.concept_labels[0], model).pooled[0], atol=1e-12)
    with pytest.raises(PoolError):
        encode_candidates([], C.ENTITY, kb1, model)


def test_label_table_matches_and_refreshes(kb1, model):
    table = label_table(kb1, model)
    direct = encode_candidates(range(len(kb1.entity_labels)), C.ENTITY, kb1, model)
    assert np.allclose(table.encoding(direct.ids, C.ENTITY).matrix, direct.matrix, atol=1e-12)
    assert label_table(kb1, model) is table
    model.store.version += 1
    assert label_table(kb1, model) is not table


def test_score_arguments_examples(model):
    from progtransfer.argument_parser import CandidateEncoding

    g = np.array([1.0, -2.0, 0.5])
    assert score_arguments(g, CandidateEncoding((7,), np.array([[3.0, 1.0, 0.0]]))).tolist() == [1.0]
    same = CandidateEncoding((1, 2, 3), np.tile([0.2, 0.1, -0.4], (3, 1)))
    assert np.allclose(score_arguments(g, same), 1 / 3)
    probs = score_arguments(g, CandidateEncoding((0, 1), np.array([[1.0, 0, 0], [0, 0, 0]])))
    assert probs[0] == pytest.approx(np.e / (np.e + 1))
    with pytest.raises(ValueError):
        score_arguments(np.zeros(2), same)


def test_argument_loss_gradients():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(N_INSTANCES):
        n, d = (int(v) for v in rng.integers(1, 6, 2))
        P, g = rng.normal(size=(n, d)), rng.normal(size=d)
        gold = int(rng.integers(n))

        def loss():
            return nn.softmax_xent(P @ g, np.array([gold]))[0]

        _, dl, _ = nn.softmax_xent(P @ g, np.array([gold]))
        dg, dP = P.T @ dl[0], np.outer(dl[0], g)
        worst = max(worst, rel_error(dg, nn.numerical_gradient(loss, g, 1e-5)),
                    rel_error(dP, nn.numerical_gradient(loss, P, 1e-5)))
    assert worst < 1e-4


def test_relation_forces_concept(kb1, model):
    sketch = [F.FindAll, F.Relate, F.FilterConcept]
    fills = fill_arguments("what arena stadium", sketch, kb1, model, k=10)
    assert len(fills) == 2  # one per relation; the concept is forced each time
    forced = {"arena stadium forward": "sports facility", "teams owned forward": "sports team"}
    for f in fills:
        rel, concept = f.program.arguments[1], f.program.arguments[2]
        assert forced[rel] == concept
        assert len(f.steps[1].pool) == 1
    assert fills[0].logprob >= fills[1].logprob


def test_k_one_is_stepwise_argmax(kb1):
    rng = np.random.default_rng(2)
    for _ in range(30):
        m = tiny_model(rng, std=1.0)
        q, sketch = random_question(rng), random_sketch(kb1, rng)
        (best,) = fill_arguments(q, sketch, kb1, m, k=1)
        greedy = sample_arguments(q, sketch, kb1, m, rng, temperature=0)
        assert best.program == greedy.program
        assert best.logprob == pytest.approx(greedy.logprob, abs=1e-9)


def _enumerate(question, sketch, kb, model, prune):
    """All assignments whose choices lie in their replayed pools, scored independently."""
    G = sketch_contexts(encode(question, model), [sketch], model)[0]
    sizes = {C.ENTITY: kb.num_entities, C.CONCEPT: len(kb.concept_labels), C.RELATION: len(kb.relation_labels)}
    slots = [t for t, fn in enumerate(sketch) if fn.category.is_kb and fn is not F.QueryRelation]
    out = {}
    for choice in itertools.product(*[range(sizes[sketch[t].category]) for t in slots]):
        args = [""] * len(sketch)
        for t, ident in zip(slots, choice):
            labels = {C.ENTITY: kb.entity_labels, C.CONCEPT: kb.concept_labels,
                      C.RELATION: kb.relation_labels}[sketch[t].category]
            args[t] = labels[ident] + (" forward" if sketch[t] is F.Relate else "")
        program = Program(tuple(sketch), tuple(args))
        try:
            steps, _ = replay_program(program, kb, prune)
        except PoolError:
            continue
        score = 0.0
        for st in steps:
            enc = encode_candidates(st.pool, st.category, kb, model)
            score += float(np.log(score_arguments(G[st.position], enc))[enc.ids.index(st.choice)])
        out[program] = score
    return out


@pytest.mark.parametrize("prune", [True, False])
def test_large_k_matches_enumeration(kb1, prune):
    rng = np.random.default_rng(3 + prune)
    for _ in range(25):
        m = tiny_model(rng, std=1.0)
        q, sketch = random_question(rng), list(random_sketch(kb1, rng, max_len=5))
        truth = _enumerate(q, sketch, kb1, m, prune)
        fills = fill_arguments(q, sketch, kb1, m, k=10_000, prune=prune)
        assert {f.program for f in fills} == set(truth)
        for f in fills:
            assert f.logprob == pytest.approx(truth[f.program], abs=1e-9)
        scores = [f.logprob for f in fills]
        assert scores == sorted(scores, reverse=True)


def test_choices_lie_in_their_pools(kb1):
    rng = np.random.default_rng(5)
    for _ in range(40):
        m = tiny_model(rng, std=1.0)
        q, sketch = random_question(rng), random_sketch(kb1, rng)
        for f in fill_arguments(q, sketch, kb1, m, k=3):
            for st in f.steps:
                assert st.choice in st.pool
            steps, _ = replay_program(f.program, kb1)
            assert [s.pool for s in steps] == [s.pool for s in f.steps]


def test_prune_off_uses_full_pools(kb1, model):
    fills = fill_arguments("who owns", [F.Find, F.Relate, F.FilterConcept], kb1, model, k=3, prune=False)
    assert fills
    full = init_pools(kb1)
    for f in fills:
        for st in f.steps:
            assert set(st.pool) == set(active_pool(full, f.program.sketch[st.position]))


def test_literals_and_query_relation_arguments(kb1, model):
    sketch = [F.Find, F.FilterYear, F.Find, F.QueryRelation]
    (fill,) = fill_arguments("x", sketch, kb1, model, k=1, spans=["inception|1900|<"])
    assert fill.program.arguments[1] == "inception|1900|<"
    assert fill.program.arguments[3] == ""
    assert [s.position for s in fill.steps] == [0, 2]
    with pytest.raises(ValueError):
        fill_arguments("x", sketch, kb1, model, k=0)


def test_link_entities(kb1):
    assert link_entities("who plays at camp nou", kb1) is None  # small KB: no restriction
    assert link_entities("who plays at camp nou", kb1, threshold=0) == ids(kb1, "entity", "Camp Nou")
    assert link_entities("what about fc ravens", kb1, threshold=0) == ids(
        kb1, "entity", "FC Barcelona", "Baltimore Ravens")
    assert link_entities("nothing matches", kb1, threshold=0) is None
