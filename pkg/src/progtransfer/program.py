"""Function vocabulary and the linearized program representation.

Programs are flat postfix sequences: every function pops its functional
inputs from a value stack and pushes one output. A sketch is the function
sequence alone; a program pairs each function with one argument string.

Textual syntax::

    Find(FC Barcelona);Relate(arena stadium forward);FilterConcept(sports facility)

Functions with several textual inputs join them with ``|``, e.g.
``FilterNum(height|200 centimetres|>)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "ArgumentCategory",
    "ValueKind",
    "FunctionKind",
    "FUNCTIONS",
    "NUM_TOKENS",
    "ProgramSyntaxError",
    "Violation",
    "Program",
    "validate",
    "SketchState",
    "parse_program_text",
    "serialize_program",
    "program_from_json",
    "program_to_json",
    "split_literal_args",
    "split_relation_arg",
    "ARG_SEPARATOR",
    "COMPARISON_OPS",
]

ARG_SEPARATOR = "|"
COMPARISON_OPS = ("=", "!=", "<", ">")
DIRECTIONS = ("forward", "backward")


class ArgumentCategory(enum.Enum):
    ENTITY = "entity"
    CONCEPT = "concept"
    RELATION = "relation"
    EMPTY = "empty"
    LITERAL = "literal"

    @property
    def is_kb(self) -> bool:
        return self in (ArgumentCategory.ENTITY, ArgumentCategory.CONCEPT, ArgumentCategory.RELATION)


class ValueKind(enum.Enum):
    ENTITIES = "entities"
    ENTITIES_FACTS = "entities+facts"
    VALUE = "value"
    TEXT = "text"
    NUMBER = "number"
    BOOLEAN = "boolean"

    def satisfies(self, wanted: "ValueKind") -> bool:
        if self is wanted:
            return True
        return self is ValueKind.ENTITIES_FACTS and wanted is ValueKind.ENTITIES


_E, _EF, _V = ValueKind.ENTITIES, ValueKind.ENTITIES_FACTS, ValueKind.VALUE
_T, _N, _B = ValueKind.TEXT, ValueKind.NUMBER, ValueKind.BOOLEAN
_C = ArgumentCategory


class FunctionKind(enum.IntEnum):
    """The 27 program functions plus START and END control tokens.

    Integer values are the token indices used by the sketch decoder.
    """

    FindAll = 0
    Find = 1
    FilterConcept = 2
    FilterStr = 3
    FilterNum = 4
    FilterYear = 5
    FilterDate = 6
    QFilterStr = 7
    QFilterNum = 8
    QFilterYear = 9
    QFilterDate = 10
    Relate = 11
    And = 12
    Or = 13
    QueryName = 14
    Count = 15
    QueryAttr = 16
    QueryAttrUnderCondition = 17
    QueryRelation = 18
    SelectBetween = 19
    SelectAmong = 20
    VerifyStr = 21
    VerifyNum = 22
    VerifyYear = 23
    VerifyDate = 24
    QueryAttrQualifier = 25
    QueryRelationQualifier = 26
    START = 27
    END = 28

    @property
    def spec(self) -> "FunctionSpec":
        return FUNCTIONS[self]

    @property
    def arity(self) -> int:
        return len(FUNCTIONS[self].inputs)

    @property
    def category(self) -> ArgumentCategory:
        return FUNCTIONS[self].category

    @property
    def is_control(self) -> bool:
        return self in (FunctionKind.START, FunctionKind.END)


NUM_TOKENS = len(FunctionKind)


@dataclass(frozen=True)
class FunctionSpec:
    inputs: tuple  # ValueKind per popped value, bottom first
    output: ValueKind | None
    category: ArgumentCategory
    text_inputs: tuple = ()  # names of the "|"-joined textual inputs


F = FunctionKind
FUNCTIONS = {
    F.FindAll: FunctionSpec((), _E, _C.EMPTY),
    F.Find: FunctionSpec((), _E, _C.ENTITY, ("name",)),
    F.FilterConcept: FunctionSpec((_E,), _E, _C.CONCEPT, ("name",)),
    F.FilterStr: FunctionSpec((_E,), _EF, _C.LITERAL, ("key", "value")),
    F.FilterNum: FunctionSpec((_E,), _EF, _C.LITERAL, ("key", "value", "op")),
    F.FilterYear: FunctionSpec((_E,), _EF, _C.LITERAL, ("key", "value", "op")),
    F.FilterDate: FunctionSpec((_E,), _EF, _C.LITERAL, ("key", "value", "op")),
    F.QFilterStr: FunctionSpec((_EF,), _EF, _C.LITERAL, ("qkey", "qvalue")),
    F.QFilterNum: FunctionSpec((_EF,), _EF, _C.LITERAL, ("qkey", "qvalue", "op")),
    F.QFilterYear: FunctionSpec((_EF,), _EF, _C.LITERAL, ("qkey", "qvalue", "op")),
    F.QFilterDate: FunctionSpec((_EF,), _EF, _C.LITERAL, ("qkey", "qvalue", "op")),
    F.Relate: FunctionSpec((_E,), _EF, _C.RELATION, ("pred", "dir")),
    F.And: FunctionSpec((_E, _E), _E, _C.EMPTY),
    F.Or: FunctionSpec((_E, _E), _E, _C.EMPTY),
    F.QueryName: FunctionSpec((_E,), _T, _C.EMPTY),
    F.Count: FunctionSpec((_E,), _N, _C.EMPTY),
    F.QueryAttr: FunctionSpec((_E,), _V, _C.LITERAL, ("key",)),
    F.QueryAttrUnderCondition: FunctionSpec((_E,), _V, _C.LITERAL, ("key", "qkey", "qvalue")),
    F.QueryRelation: FunctionSpec((_E, _E), _T, _C.RELATION, ("pred",)),
    F.SelectBetween: FunctionSpec((_E, _E), _T, _C.LITERAL, ("key", "op")),
    F.SelectAmong: FunctionSpec((_E,), _T, _C.LITERAL, ("key", "op")),
    F.VerifyStr: FunctionSpec((_V,), _B, _C.LITERAL, ("value",)),
    F.VerifyNum: FunctionSpec((_V,), _B, _C.LITERAL, ("value", "op")),
    F.VerifyYear: FunctionSpec((_V,), _B, _C.LITERAL, ("value", "op")),
    F.VerifyDate: FunctionSpec((_V,), _B, _C.LITERAL, ("value", "op")),
    F.QueryAttrQualifier: FunctionSpec((_E,), _V, _C.LITERAL, ("key", "value", "qkey")),
    F.QueryRelationQualifier: FunctionSpec((_E, _E), _V, _C.LITERAL, ("pred", "qkey")),
    F.START: FunctionSpec((), None, _C.EMPTY),
    F.END: FunctionSpec((), None, _C.EMPTY),
}
del F

_SELECT_OPS = {
    FunctionKind.SelectBetween: ("greater", "less"),
    FunctionKind.SelectAmong: ("largest", "smallest"),
}


class ProgramSyntaxError(ValueError):
    """Unknown function name or malformed argument text."""


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------


def split_relation_arg(text: str) -> tuple:
    """``"arena stadium forward"`` -> ``("arena stadium", "forward")``.

    The direction defaults to forward when the text carries none.
    """
    text = " ".join(text.split())
    head, _, last = text.rpartition(" ")
    if head and last.lower() in DIRECTIONS:
        return head, last.lower()
    return text, "forward"


def split_literal_args(fn: FunctionKind, text: str) -> tuple:
    """Split and check the ``|``-joined textual inputs of a literal function."""
    spec = FUNCTIONS[fn]
    parts = tuple(p.strip() for p in text.split(ARG_SEPARATOR)) if text.strip() else ()
    if len(parts) != len(spec.text_inputs):
        raise ProgramSyntaxError(
            f"{fn.name} expects {len(spec.text_inputs)} textual inputs "
            f"({', '.join(spec.text_inputs)}), got {len(parts)} in {text!r}")
    if any(not p for p in parts):
        raise ProgramSyntaxError(f"{fn.name}: empty textual input in {text!r}")
    named = dict(zip(spec.text_inputs, parts))
    if "op" in named:
        allowed = _SELECT_OPS.get(fn, COMPARISON_OPS)
        if named["op"] not in allowed:
            raise ProgramSyntaxError(f"{fn.name}: operator must be one of {allowed}, got {named['op']!r}")
    kind = _literal_kind(fn)
    if kind is not None:
        from .kb import Literal

        field_name = "qvalue" if "qvalue" in named else "value"
        try:
            Literal.parse_as(kind, named[field_name])
        except ValueError as exc:
            raise ProgramSyntaxError(f"{fn.name}: {exc}") from None
    return parts


def _literal_kind(fn: FunctionKind) -> str | None:
    name = fn.name
    for suffix, kind in (("Num", "quantity"), ("Year", "year"), ("Date", "date")):
        if name.endswith(suffix):
            return kind
    return None


def check_argument(fn: FunctionKind, arg: str) -> None:
    cat = FUNCTIONS[fn].category
    if fn.is_control:
        raise ProgramSyntaxError(f"{fn.name} is a control token, not a program function")
    if cat is ArgumentCategory.EMPTY:
        if arg.strip():
            raise ProgramSyntaxError(f"{fn.name} takes no argument, got {arg!r}")
    elif cat is ArgumentCategory.LITERAL:
        split_literal_args(fn, arg)
    elif cat is ArgumentCategory.RELATION and fn is FunctionKind.QueryRelation:
        pass  # optional predicate restriction
    elif not arg.strip():
        raise ProgramSyntaxError(f"{fn.name} needs a {cat.value} argument")
    if any(ch in arg for ch in ";()") and not _balanced(arg):
        raise ProgramSyntaxError(f"{fn.name}: unbalanced parentheses in {arg!r}")


def _balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


# ---------------------------------------------------------------------------
# Program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    functions: tuple
    arguments: tuple

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(FunctionKind(f) for f in self.functions))
        object.__setattr__(self, "arguments", tuple(self.arguments))
        if len(self.functions) != len(self.arguments):
            raise ValueError("one argument per function is required")

    @classmethod
    def of(cls, steps: Iterable) -> "Program":
        """Build from ``(FunctionKind | name, argument)`` pairs."""
        fns, args = [], []
        for fn, arg in steps:
            fns.append(FunctionKind[fn] if isinstance(fn, str) else FunctionKind(fn))
            args.append(arg)
        return cls(tuple(fns), tuple(args))

    @property
    def sketch(self) -> tuple:
        return self.functions

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self):
        return iter(zip(self.functions, self.arguments))

    def __str__(self) -> str:
        return serialize_program(self)


def serialize_program(program: Program) -> str:
    parts = []
    for fn, arg in program:
        if ";" in arg or not _balanced(arg):
            raise ProgramSyntaxError(f"argument {arg!r} cannot be written in text form")
        parts.append(f"{fn.name}({arg})")
    return ";".join(parts)


def parse_program_text(text: str) -> Program:
    """Parse ``Func(arg);Func(arg);...`` into a :class:`Program`."""
    steps = []
    i, n = 0, len(text)
    while True:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and (text[j].isalnum() or text[j] == "_"):
            j += 1
        name = text[i:j]
        if not name:
            raise ProgramSyntaxError(f"expected a function name at offset {i}: {text[i:i + 20]!r}")
        try:
            fn = FunctionKind[name]
        except KeyError:
            raise ProgramSyntaxError(f"unknown function {name!r}") from None
        if fn.is_control:
            raise ProgramSyntaxError(f"{name} cannot appear in program text")
        while j < n and text[j].isspace():
            j += 1
        if j >= n or text[j] != "(":
            raise ProgramSyntaxError(f"expected '(' after {name} at offset {j}")
        depth, k = 1, j + 1
        while k < n and depth:
            depth += text[k] == "("
            depth -= text[k] == ")"
            k += 1
        if depth:
            raise ProgramSyntaxError(f"unclosed argument list for {name}")
        arg = text[j + 1:k - 1].strip()
        check_argument(fn, arg)
        steps.append((fn, arg))
        while k < n and text[k].isspace():
            k += 1
        if k < n:
            if text[k] != ";":
                raise ProgramSyntaxError(f"expected ';' at offset {k}, got {text[k]!r}")
            k += 1
        i = k
    if not steps:
        raise ProgramSyntaxError("empty program")
    return Program.of(steps)


def program_to_json(program: Program) -> list:
    return [{"function": fn.name, "argument": arg} for fn, arg in program]


def program_from_json(items: Sequence) -> Program:
    steps = []
    for i, item in enumerate(items):
        try:
            name, arg = item["function"], item.get("argument", "") or ""
        except (TypeError, KeyError):
            raise ProgramSyntaxError(f"step {i}: expected {{function, argument}}") from None
        try:
            fn = FunctionKind[name]
        except KeyError:
            raise ProgramSyntaxError(f"step {i}: unknown function {name!r}") from None
        check_argument(fn, arg)
        steps.append((fn, arg))
    return Program.of(steps)


# ---------------------------------------------------------------------------
# Sketch validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    position: int
    reason: str

    def __str__(self) -> str:
        return f"position {self.position}: {self.reason}"


class SketchState:
    """Incremental stack simulation used by validation and decoding.

    With ``typed`` the value kinds are tracked too; otherwise only depth.
    """

    __slots__ = ("stack", "typed", "done")

    def __init__(self, typed: bool = True, stack: tuple = (), done: bool = False):
        self.typed = typed
        self.stack = stack
        self.done = done

    def check(self, fn: FunctionKind) -> str | None:
        """Reason why ``fn`` cannot follow, or None."""
        if self.done:
            return "token after END"
        if fn is FunctionKind.START:
            return "START inside a sketch"
        if fn is FunctionKind.END:
            if len(self.stack) != 1:
                return f"{len(self.stack)} values remain at END" if self.stack else "empty sketch"
            return None
        spec = FUNCTIONS[fn]
        if len(self.stack) < len(spec.inputs):
            return f"stack underflow: {fn.name} needs {len(spec.inputs)} inputs, {len(self.stack)} available"
        if self.typed and spec.inputs:
            got = self.stack[len(self.stack) - len(spec.inputs):]
            for have, want in zip(got, spec.inputs):
                if not have.satisfies(want):
                    return f"type mismatch: {fn.name} expects {want.value}, got {have.value}"
        return None

    def push(self, fn: FunctionKind) -> "SketchState":
        if fn is FunctionKind.END:
            return SketchState(self.typed, self.stack, True)
        spec = FUNCTIONS[fn]
        base = self.stack[:len(self.stack) - len(spec.inputs)]
        return SketchState(self.typed, base + (spec.output,), False)

    def allowed(self) -> list:
        return [fn for fn in FunctionKind if self.check(fn) is None]


def validate(sketch: Sequence, typed: bool = False) -> Violation | None:
    """First stack violation of ``sketch`` or None when it is well formed.

    ``sketch`` may end with END; without it the end of the sequence is
    treated as END. ``typed`` additionally checks value kinds.
    """
    state = SketchState(typed)
    tokens = [FunctionKind(t) for t in sketch]
    if not tokens or tokens[-1] is not FunctionKind.END:
        tokens.append(FunctionKind.END)
    for pos, fn in enumerate(tokens):
        reason = state.check(fn)
        if reason:
            return Violation(pos, reason)
        state = state.push(fn)
    return None
