import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tkgrule import kernels
from tkgrule._kernels_py import classify_many as classify_many_py
from tkgrule.allen import (
    NUM_ALLEN,
    PREDICATES,
    AllenRelation,
    candidate_end_range,
    candidate_start_range,
    classify,
    classify_many,
    holds,
    invert,
)
from tkgrule.core import TimeVocab

from oracles import allen_oracle, end_range_oracle, start_range_oracle

A = AllenRelation


@st.composite
def intervals(draw, lo=0, hi=3000):
    b = draw(st.integers(lo, hi))
    e = draw(st.integers(b, hi))
    return (b, e)


small_intervals = intervals(0, 12)


@pytest.mark.parametrize(
    "t1, t2, expected",
    [
        ((2000, 2005), (2000, 2005), A.EQUALS),
        ((1920, 1946), (1899, 1974), A.DURING),
        ((1899, 1902), (1901, 1905), A.OVERLAPS),
        ((1990, 1995), (1995, 2000), A.MEETS),
        ((1995, 2000), (1990, 1995), A.MET_BY),
        ((2000, 2000), (2000, 2004), A.STARTS),
        ((2004, 2004), (2000, 2004), A.FINISHES),
        ((2000, 2000), (2000, 2000), A.EQUALS),
        ((1990, 1991), (1993, 1999), A.BEFORE),
    ],
)
def test_classify_examples(t1, t2, expected):
    assert classify(t1, t2) is expected


def test_classify_rejects_reversed_interval():
    with pytest.raises(ValueError):
        classify((2001, 2000), (1990, 1995))


@pytest.mark.parametrize("rel, inv", [(A.BEFORE, A.AFTER), (A.EQUALS, A.EQUALS), (A.DURING, A.CONTAINS),
                                      (A.MEETS, A.MET_BY), (A.FINISHES, A.FINISHED_BY)])
def test_invert_examples(rel, inv):
    assert invert(rel) is inv
    assert invert(inv) is rel


def test_tags_and_titles():
    assert A.MET_BY.tag == "met_by"
    assert A.OVERLAPPED_BY.title == "OverlappedBy"
    assert A.from_tag("during") is A.DURING
    with pytest.raises(ValueError):
        A.from_tag("sometime")
    assert NUM_ALLEN == 13


@settings(max_examples=500)
@given(intervals(), intervals())
def test_exactly_one_predicate(t1, t2):
    accepted = [rel for rel, pred in PREDICATES.items() if pred(*t1, *t2)]
    assert accepted == [classify(t1, t2)]
    assert holds(classify(t1, t2), t1, t2)


@settings(max_examples=500)
@given(intervals(), intervals())
def test_converse(t1, t2):
    assert classify(t1, t2) is invert(classify(t2, t1))


@given(st.sampled_from(list(A)))
def test_invert_is_involution(rel):
    assert invert(invert(rel)) is rel


@settings(max_examples=300)
@given(small_intervals, small_intervals)
def test_matches_endpoint_table(t1, t2):
    assert int(classify(t1, t2)) == allen_oracle(t1, t2)


def test_vectorized_backends_agree():
    rng = np.random.default_rng(3)
    b1 = rng.integers(0, 40, 5000)
    e1 = b1 + rng.integers(0, 10, 5000)
    b2 = rng.integers(0, 40, 5000)
    e2 = b2 + rng.integers(0, 10, 5000)
    expected = np.array([classify((x, y), (u, v)) for x, y, u, v in zip(b1, e1, b2, e2)])
    np.testing.assert_array_equal(classify_many(b1, e1, b2, e2), expected)
    np.testing.assert_array_equal(kernels.classify_many(b1, e1, b2, e2), expected)
    np.testing.assert_array_equal(classify_many_py(b1, e1, b2, e2), expected)


VOCAB = TimeVocab([1900, 1940, 1950, 1955, 1960, 1970, 2000])


def test_candidate_ranges_from_examples():
    assert candidate_start_range(A.BEFORE, (1950, 1960), VOCAB) == [1900, 1940]
    assert candidate_start_range(A.EQUALS, (1950, 1960), VOCAB) == [1950]
    assert candidate_start_range(A.DURING, (1950, 1960), VOCAB) == [1955]
    assert candidate_end_range(A.EQUALS, (1950, 1960), VOCAB) == [1960]
    assert candidate_end_range(A.AFTER, (1950, 1960), VOCAB) == [1970, 2000]
    assert candidate_end_range(A.MEETS, (1950, 1960), VOCAB) == [1950]


@pytest.mark.parametrize("rel", list(A))
def test_candidate_ranges_match_projection(rel):
    years = [int(y) for y in VOCAB.years]
    for i, b in enumerate(years):
        for e in years[i:]:
            assert candidate_start_range(rel, (b, e), VOCAB) == start_range_oracle(rel, (b, e), years)
            assert candidate_end_range(rel, (b, e), VOCAB) == end_range_oracle(rel, (b, e), years)


@settings(max_examples=200)
@given(st.lists(st.integers(0, 60), min_size=2, max_size=9, unique=True), st.data())
def test_candidate_ranges_property(years, data):
    vocab = TimeVocab(years)
    ys = [int(y) for y in vocab.years]
    b = data.draw(st.sampled_from(ys))
    e = data.draw(st.sampled_from([y for y in ys if y >= b]))
    rel = data.draw(st.sampled_from(list(A)))
    assert candidate_start_range(rel, (b, e), vocab) == start_range_oracle(rel, (b, e), ys)
    assert candidate_end_range(rel, (b, e), vocab) == end_range_oracle(rel, (b, e), ys)
