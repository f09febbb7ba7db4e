import numpy as np
import pytest

from progtransfer.executor import execute
from progtransfer.program import FunctionKind as F, validate
from progtransfer.pruning import replay_program
from progtransfer.synthetic import SyntheticConfig, generate_synthetic_domains, pseudo_words


@pytest.fixture(scope="module")
def domains():
    return generate_synthetic_domains(SyntheticConfig(seed=4, source_size=150, target_size=60, dev_size=30))


def test_sizes_and_ids(domains):
    assert len(domains.source) == 150
    assert (len(domains.target_train), len(domains.target_dev)) == (60, 30)
    qids = [ex.qid for ex in domains.source + domains.target_train + domains.target_dev]
    assert len(set(qids)) == len(qids)


def test_source_programs_execute_to_nonempty_answers(domains):
    for ex in domains.source:
        assert ex.program is not None
        assert not validate(ex.program.sketch, typed=True)
        answers = execute(ex.program, domains.kb_source).answers
        assert answers and tuple(answers) == ex.answers


def test_target_carries_only_answers(domains):
    for ex in domains.target_train + domains.target_dev:
        assert ex.program is None and ex.answers
        hidden = domains.hidden_programs[ex.qid]
        assert tuple(execute(hidden, domains.kb_target).answers) == ex.answers


def test_label_sets_are_disjoint(domains):
    s, t = domains.kb_source, domains.kb_target
    assert not set(s.relation_labels) & set(t.relation_labels)
    assert not set(s.entity_labels) & set(t.entity_labels)
    assert not set(s.concept_labels) & set(t.concept_labels)


def test_gold_arguments_stay_in_pools(domains):
    for ex in domains.source:
        _, pools = replay_program(ex.program, domains.kb_source)
        assert pools.fallbacks == 0


def test_question_types_present(domains):
    sketches = {ex.program.sketch for ex in domains.source}
    assert any(F.And in s for s in sketches)
    assert any(F.Count in s for s in sketches)
    assert any(F.SelectAmong in s for s in sketches)
    assert any(s.count(F.Relate) == 2 for s in sketches)


def test_deterministic():
    cfg = SyntheticConfig(seed=9, source_size=20, target_size=10, dev_size=5)
    a, b = generate_synthetic_domains(cfg), generate_synthetic_domains(cfg)
    assert a.source == b.source and a.target_train == b.target_train and a.target_dev == b.target_dev
    assert a.kb_source == b.kb_source and a.kb_target == b.kb_target
    c = generate_synthetic_domains(SyntheticConfig(seed=10, source_size=20, target_size=10, dev_size=5))
    assert c.source != a.source


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(source_size=0)
    with pytest.raises(ValueError):
        SyntheticConfig(concepts=1)
    with pytest.raises(ValueError):
        SyntheticConfig(mix=(1, 0))


def test_pseudo_words_distinct():
    words = pseudo_words(np.random.default_rng(0), 500, {"ba"})
    assert len(set(words)) == 500 and "ba" not in words
