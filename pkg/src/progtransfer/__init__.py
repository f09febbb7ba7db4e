"""Two-stage program transfer for question answering over knowledge bases."""

from .executor import brute_force_oracle, execute
from .kb import KBBuilder, KnowledgeBase, Literal, dump_kb, load_kb
from .program import FunctionKind, Program, parse_program_text, serialize_program, validate

__version__ = "0.1.0"

__all__ = [
    "KBBuilder",
    "KnowledgeBase",
    "Literal",
    "load_kb",
    "dump_kb",
    "FunctionKind",
    "Program",
    "parse_program_text",
    "serialize_program",
    "validate",
    "execute",
    "brute_force_oracle",
]
