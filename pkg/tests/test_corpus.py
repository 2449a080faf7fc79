import itertools

import pytest

from rcising.corpus import CORPORA, SuiteRow, identity_suite, instances
from rcising.errors import DomainError


def test_tiny_corpus_passes_and_is_deterministic():
    a = list(identity_suite("tiny", 5))
    b = list(identity_suite("tiny", 5))
    n = CORPORA["tiny"]
    assert len(a) == n["switching"] + 2 * n["routes"] + n["inequalities"]
    assert all(r.passed for r in a)
    assert [r.cells() for r in a] == [r.cells() for r in b]


def test_seed_changes_corpus():
    a = [i.gg.digest() for i in itertools.islice(instances(0, 10), 10)]
    b = [i.gg.digest() for i in itertools.islice(instances(1, 10), 10)]
    assert a != b


def test_unknown_corpus():
    with pytest.raises(DomainError):
        list(identity_suite("huge"))


def test_row_cells():
    r = SuiteRow("d", "x", 0.1, 0.1, 1e-12, True)
    assert len(r.cells()) == len(SuiteRow.HEADER)
    assert r.cells()[-1] == "pass"
    assert SuiteRow("d", "x", 1.0, 0.0, -1.0, False).cells()[-1] == "fail"
