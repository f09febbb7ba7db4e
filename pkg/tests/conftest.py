from pathlib import Path

import numpy as np
import pytest

from progtransfer import load_kb

DATA = Path(__file__).parent / "data"
FIXTURE1 = DATA / "fixture1.json"


@pytest.fixture(scope="session")
def kb1():
    return load_kb(FIXTURE1)


def ids(kb, category, *labels):
    table = {"entity": kb.entity_labels, "concept": kb.concept_labels, "relation": kb.relation_labels}[category]
    return frozenset(table.index(lab) for lab in labels)


def rel_error(a, b) -> float:
    """``|a - b| / (|a| + |b|)`` over whole arrays; 0 when both vanish."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den < 1e-12 else float(np.linalg.norm(a - b) / den)
