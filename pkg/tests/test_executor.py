import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from progtransfer.executor import (
    ArgumentError,
    Boolean,
    EntitySet,
    ExecutionError,
    LiteralValue,
    Number,
    ResolutionError,
    StackError,
    TypeMismatchError,
    brute_force_oracle,
    execute,
)
from progtransfer.kb import KBBuilder, Literal
from progtransfer.program import FunctionKind as F, Program, parse_program_text
from progtransfer.randomgen import random_kb, random_program

EXAMPLES = [
    ("Find(FC Barcelona);Relate(arena stadium forward);FilterConcept(sports facility)", ("Camp Nou",)),
    ("Find(Steve Bisciotti);Relate(teams owned forward);FilterConcept(sports team)", ("Baltimore Ravens",)),
    ("FindAll();Count()", ("4",)),
    ("Find(Camp Nou);Find(Baltimore Ravens);And()", ()),
]


@pytest.mark.parametrize("text,answers", EXAMPLES)
def test_examples(kb1, text, answers):
    p = parse_program_text(text)
    assert execute(p, kb1).answers == answers
    assert brute_force_oracle(p, kb1).answers == answers
    assert execute(p, kb1) == brute_force_oracle(p, kb1)


def test_count_value(kb1):
    assert execute(parse_program_text("FindAll();Count()"), kb1).value == Number(4.0)


def test_relate_without_direction_is_forward(kb1):
    p = parse_program_text("Find(FC Barcelona);Relate(arena stadium)")
    assert execute(p, kb1).answers == ("Camp Nou",)
    back = parse_program_text("Find(Camp Nou);Relate(arena stadium backward)")
    assert execute(back, kb1).answers == ("FC Barcelona",)


def test_qualifier_filter(kb1):
    p = parse_program_text("Find(Steve Bisciotti);Relate(teams owned);QFilterYear(start time|2000|>)")
    assert execute(p, kb1).answers == ("Baltimore Ravens",)
    p = parse_program_text("Find(Steve Bisciotti);Relate(teams owned);QFilterYear(start time|2004|<)")
    assert execute(p, kb1).answers == ()
    p = parse_program_text("Find(Steve Bisciotti);Find(Baltimore Ravens);QueryRelationQualifier(teams owned|start time)")
    assert execute(p, kb1).answers == ("2004",)


def test_attribute_functions(kb1):
    run = lambda t: execute(parse_program_text(t), kb1).answers  # noqa: E731
    assert run("FindAll();FilterYear(inception|1950|<);QueryName()") == ("FC Barcelona",)
    assert run("Find(FC Barcelona);Find(Baltimore Ravens);SelectBetween(inception|greater)") == ("Baltimore Ravens",)
    assert run("FindAll();SelectAmong(inception|smallest)") == ("FC Barcelona",)
    assert run("Find(Camp Nou);QueryAttr(capacity)") == ("99354 1",)
    assert run("Find(Camp Nou);QueryAttr(capacity);VerifyNum(90000 1|>)") == ("yes",)
    assert run("Find(Camp Nou);QueryAttr(capacity);VerifyNum(90000 seats|>)") == ("no",)
    assert run("Find(Steve Bisciotti);Find(Baltimore Ravens);QueryRelation()") == ("teams owned",)
    assert run("Find(FC Barcelona);Find(Baltimore Ravens);QueryRelation()") == ()


def test_unresolvable_label_is_error_empty_is_not(kb1):
    with pytest.raises(ResolutionError):
        execute(parse_program_text("Find(Real Madrid)"), kb1)
    with pytest.raises(ResolutionError):
        execute(parse_program_text("FindAll();FilterConcept(planet)"), kb1)
    with pytest.raises(ResolutionError):
        execute(parse_program_text("FindAll();Relate(sponsor)"), kb1)
    assert execute(parse_program_text("Find(Camp Nou);Relate(teams owned)"), kb1).answers == ()


def test_structural_errors(kb1):
    with pytest.raises(StackError):
        execute(Program((F.And,), ("",)), kb1)
    with pytest.raises(StackError):
        execute(parse_program_text("FindAll();FindAll()"), kb1)
    with pytest.raises(TypeMismatchError):
        execute(parse_program_text("FindAll();Count();Count()"), kb1)
    with pytest.raises(TypeMismatchError):
        execute(parse_program_text("FindAll();QueryName();VerifyStr(x)"), kb1)
    with pytest.raises(TypeMismatchError):
        execute(parse_program_text("FindAll();QFilterStr(a|b)"), kb1)
    with pytest.raises(ArgumentError):
        execute(Program((F.FindAll, F.FilterNum), ("", "height|tall|>")), kb1)


def test_same_errors_in_oracle(kb1):
    for prog in (Program((F.And,), ("",)), parse_program_text("FindAll();Count();Count()"),
                 parse_program_text("Find(Real Madrid)")):
        with pytest.raises(ExecutionError) as a:
            execute(prog, kb1)
        with pytest.raises(ExecutionError) as b:
            brute_force_oracle(prog, kb1)
        assert type(a.value) is type(b.value)


def _toy():
    b = KBBuilder()
    c = b.concept("thing")
    x1 = b.entity("twin", [c])
    x2 = b.entity("twin", [c])
    y = b.entity("solo", [c])
    b.attribute(x1, "height", Literal.quantity(5, "m"))
    b.attribute(x2, "height", Literal.quantity(5, "m"))
    b.attribute(y, "height", Literal.quantity(500, "cm"))
    b.attribute(y, "award", Literal.string("gold"), [("point in time", Literal.year(2001))])
    b.attribute(y, "award", Literal.string("silver"), [("point in time", Literal.year(2001))])
    return b.build(), (x1, x2, y)


def test_shared_labels_and_ties():
    kb, (x1, x2, y) = _toy()
    assert execute(parse_program_text("Find(twin)"), kb).value == EntitySet(frozenset({x1, x2}))
    # ties go to the smallest id; the cm height is excluded by unit mismatch in filters only
    assert execute(parse_program_text("Find(twin);SelectAmong(height|largest)"), kb).answers == ("twin",)
    assert execute(parse_program_text("FindAll();FilterNum(height|5 m|=);Count()"), kb).answers == ("2",)
    assert execute(parse_program_text("FindAll();FilterNum(height|500 m|=);Count()"), kb).answers == ("0",)


def test_query_attr_under_condition_returns_all_matches():
    kb, _ = _toy()
    p = parse_program_text("Find(solo);QueryAttrUnderCondition(award|point in time|2001)")
    assert execute(p, kb).value == LiteralValue(frozenset({Literal.string("gold"), Literal.string("silver")}))
    v = parse_program_text("Find(solo);QueryAttrUnderCondition(award|point in time|2001);VerifyStr(silver)")
    assert execute(v, kb).value == Boolean(True)


def test_trace(kb1):
    p = parse_program_text(EXAMPLES[0][0])
    res = execute(p, kb1, trace=True)
    assert [s.function for s in res.trace] == [F.Find, F.Relate, F.FilterConcept]
    assert res.trace[1].output == "entities[1]+facts[1]"
    assert execute(p, kb1, trace=True).trace == res.trace


def _pairs():
    return st.integers(0, 2**32 - 1).map(np.random.default_rng)


@settings(max_examples=300, deadline=None)
@given(_pairs())
def test_oracle_equivalence_sample(rng):
    kb = random_kb(rng)
    p = random_program(kb, rng)
    try:
        a = execute(p, kb)
    except ExecutionError as exc:
        with pytest.raises(type(exc)):
            brute_force_oracle(p, kb)
        return
    b = brute_force_oracle(p, kb)
    assert a.value == b.value and a.answers == b.answers


def _entity_program(kb, rng):
    while True:
        p = random_program(kb, rng, max_len=4)
        try:
            v = execute(p, kb).value
        except ExecutionError:
            continue
        if isinstance(v, EntitySet):
            return p


def _set(p, kb):
    return execute(p, kb).value.ids


def _join(*parts):
    fns, args = [], []
    for p in parts:
        if isinstance(p, Program):
            fns += p.functions
            args += p.arguments
        else:
            fns.append(p)
            args.append("")
    return Program(tuple(fns), tuple(args))


@settings(max_examples=100, deadline=None)
@given(_pairs())
def test_set_algebra(rng):
    kb = random_kb(rng, max_entities=30)
    a, b, c = (_entity_program(kb, rng) for _ in range(3))
    A, B = _set(a, kb), _set(b, kb)
    for op in (F.And, F.Or):
        ab = _set(_join(a, b, op), kb)
        assert ab == _set(_join(b, a, op), kb)
        assert _set(_join(_join(a, b, op), c, op), kb) == _set(_join(a, _join(b, c, op), op), kb)
        assert _set(_join(a, a, op), kb) == A
    assert _set(_join(a, b, F.And), kb) <= A
    for concept in kb.concept_labels:
        f = Program(a.functions + (F.FilterConcept,), a.arguments + (concept,))
        assert _set(f, kb) <= A
    assert execute(_join(a, F.Count), kb).value.value >= 0
    assert _set(_join(a, b, F.Or), kb) == A | B


@settings(max_examples=100, deadline=None)
@given(_pairs())
def test_relate_round_trip(rng):
    kb = random_kb(rng, max_entities=30)
    for (h, r, _t) in kb.triples[:10]:
        label = kb.entity_labels[h]
        if len(kb.entities_named(label)) != 1:
            continue  # the property is stated for a singleton start set
        rel = kb.relation_labels[r]
        p = parse_program_text(f"Find({label});Relate({rel} forward);Relate({rel} backward)")
        assert h in _set(p, kb)
