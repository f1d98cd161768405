import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tkgrule.metrics import aeiou, best_aeiou, filtered_rank, ranking_metrics


@pytest.mark.parametrize("gold, pred, want", [
    ((2000, 2000), (2004, 2004), 0.2),
    ((2000, 2003), (2002, 2005), 2 / 6),
    ((1984, 2002), (1984, 2002), 1.0),
])
def test_aeiou_examples(gold, pred, want):
    assert abs(aeiou(gold, pred) - want) < 1e-9


def test_best_aeiou_takes_the_closest_gold():
    assert best_aeiou([(1990, 1991), (2000, 2003)], (2002, 2005)) == pytest.approx(2 / 6)


interval = st.tuples(st.integers(1900, 2050), st.integers(0, 30)).map(lambda t: (t[0], t[0] + t[1]))


@given(interval, interval)
def test_aeiou_bounds_and_identity(gold, pred):
    v = aeiou(gold, pred)
    assert 0 < v <= 1
    assert (v == 1) == (gold == pred)
    assert v == aeiou(pred, gold)


@given(interval, st.integers(0, 20), st.integers(0, 40), st.integers(0, 40))
def test_aeiou_monotone_under_shift(gold, width, k1, k2):
    near, far = sorted((k1, k2))
    for sign in (1, -1):
        base = gold[0] + sign * near
        moved = gold[0] + sign * far
        assert aeiou(gold, (moved, moved + width)) <= aeiou(gold, (base, base + width)) + 1e-12


def test_rank_tables():
    assert ranking_metrics([1, 1, 1]) == {"MRR": 1.0, "Hits@1": 1.0, "Hits@10": 1.0}
    assert ranking_metrics([2, 2]) == {"MRR": 0.5, "Hits@1": 0.0, "Hits@10": 1.0}
    m = ranking_metrics([1, 4, 20, 2.5])
    assert m["MRR"] == (1 + 0.25 + 0.05 + 0.4) / 4
    assert m["Hits@1"] == 0.25 and m["Hits@10"] == 0.75
    assert ranking_metrics([]) == {"MRR": 0.0, "Hits@1": 0.0, "Hits@10": 0.0}


def test_filtered_rank_cases():
    scores = np.array([0.9, 0.5, 0.7, 0.5, 0.1])
    assert filtered_rank(scores, 2) == 2.0
    assert filtered_rank(scores, 2, filtered=[0]) == 1.0
    # 1 and 3 tie: mean of ranks 3 and 4
    assert filtered_rank(scores, 1) == 3.5
    assert filtered_rank(scores, 1, filtered=[3]) == 3.0
    # filtering the gold itself is ignored
    assert filtered_rank(scores, 4, filtered=[4]) == 5.0


def test_zero_gold_gets_expected_rank_among_zeros():
    scores = np.array([0.0, 0.0, 0.0, 2.0, 0.0])
    assert filtered_rank(scores, 0) == 1 + 1 + 3 / 2


def _manual_rank(scores, gold, filtered):
    """Positions 1..n sorted by score; the gold's rank is averaged over its tie block."""
    cands = [i for i in range(len(scores)) if i == gold or i not in filtered]
    order = sorted(cands, key=lambda i: -scores[i])
    positions = [k + 1 for k, i in enumerate(order) if scores[i] == scores[gold]]
    return sum(positions) / len(positions)


def test_three_query_toy():
    table = [
        (np.array([0.2, 0.9, 0.4, 0.4]), 2, {1}),
        (np.array([0.0, 0.0, 0.0, 0.0]), 0, set()),
        (np.array([0.5, 0.1, 0.5, 0.3]), 3, {0, 2}),
    ]
    ranks = [filtered_rank(s, g, f) for s, g, f in table]
    assert ranks == [1.5, 2.5, 1.0]
    assert ranks == [_manual_rank(s, g, f) for s, g, f in table]
    assert ranking_metrics(ranks)["MRR"] == pytest.approx((1 / 1.5 + 1 / 2.5 + 1) / 3)


@given(st.lists(st.integers(0, 4), min_size=2, max_size=12), st.data())
def test_filtered_rank_matches_sort(raw, data):
    scores = np.array(raw, dtype=float)
    gold = data.draw(st.integers(0, len(raw) - 1))
    filt = data.draw(st.sets(st.integers(0, len(raw) - 1)))
    assert filtered_rank(scores, gold, filt) == _manual_rank(scores, gold, filt)
