import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_ttr_mean
from streamsparse.ingest import ReviewRecord, ReviewStream
from streamsparse.lexical_stats import richness, richness_report, tokenize


def test_tokenize():
    assert tokenize("Great, GREAT buy!") == ["great", "great", "buy"]
    assert tokenize("") == []
    assert tokenize("a1-b2") == ["a1", "b2"]
    assert tokenize("snake_case") == ["snake", "case"]


def test_richness_basics():
    assert richness(["the the the"]) == pytest.approx(1 / 3)
    assert richness(["a b c"]) == 1.0
    assert richness([]) is None
    assert richness(["", "!!"]) is None
    assert richness(["", "a a"]) == 0.5


def test_matches_recount_oracle():
    rng = random.Random(12)
    vocab = "alpha beta gamma delta epsilon zeta eta theta".split() + ["ünï", "42"]
    for _ in range(30):
        texts = [" ".join(rng.choice(vocab) for _ in range(rng.randint(0, 15))) for _ in range(20)]
        expected = oracle_ttr_mean(texts)
        got = richness(texts)
        if expected is None:
            assert got is None
        else:
            assert abs(got - expected) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(), min_size=1, max_size=10))
def test_duplicating_list_keeps_average(texts):
    once, twice = richness(texts), richness(texts + texts)
    if once is None:
        assert twice is None
    else:
        assert 0 < once <= 1
        assert twice == pytest.approx(once, abs=1e-12)


def test_report_groups():
    recs = [
        ReviewRecord("u", "p", 0, 5, "good good"),
        ReviewRecord("u", "p", 1, 5, "fine product", synthetic=True, category="LongTail"),
    ]
    report = richness_report(ReviewStream.from_records(recs))
    assert set(report.groups) == {"original", "synthetic-longtail"}
    assert report.groups["original"].richness == 0.5
    assert report.groups["synthetic-longtail"].tokens == 2
    assert "synthetic-longtail" in report.table()
