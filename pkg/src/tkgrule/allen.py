"""Allen's interval algebra over closed integer-year intervals.

Intervals are ``(begin, end)`` pairs with ``begin <= end``; instants ``[t, t]``
are allowed, so the relations below use non-strict validity but strict
endpoint comparisons, which keeps the 13 relations exhaustive and disjoint.
"""
from __future__ import annotations

import enum

import numpy as np


class AllenRelation(enum.IntEnum):
    BEFORE = 0
    AFTER = 1
    MEETS = 2
    MET_BY = 3
    OVERLAPS = 4
    OVERLAPPED_BY = 5
    STARTS = 6
    STARTED_BY = 7
    DURING = 8
    CONTAINS = 9
    FINISHES = 10
    FINISHED_BY = 11
    EQUALS = 12

    @property
    def tag(self) -> str:
        """Lowercase serialization name, e.g. ``met_by``."""
        return self.name.lower()

    @property
    def title(self) -> str:
        """CamelCase display name used in rule explanations, e.g. ``MetBy``."""
        return "".join(part.capitalize() for part in self.name.split("_"))

    @classmethod
    def from_tag(cls, tag: str) -> "AllenRelation":
        try:
            return cls[tag.upper()]
        except KeyError:
            raise ValueError(f"unknown Allen relation tag {tag!r}") from None


NUM_ALLEN = len(AllenRelation)


# One predicate per relation, written directly from the endpoint definitions.
# ``classify`` is the fast decision tree; these exist so the two can be
# checked against each other.
def _before(b1, e1, b2, e2):
    return e1 < b2


def _after(b1, e1, b2, e2):
    return b1 > e2


def _meets(b1, e1, b2, e2):
    return b1 < b2 and e1 == b2 and e1 < e2


def _met_by(b1, e1, b2, e2):
    return b2 < b1 and b1 == e2 and e2 < e1


def _overlaps(b1, e1, b2, e2):
    return b1 < b2 < e1 < e2


def _overlapped_by(b1, e1, b2, e2):
    return b2 < b1 < e2 < e1


def _starts(b1, e1, b2, e2):
    return b1 == b2 and e1 < e2


def _started_by(b1, e1, b2, e2):
    return b1 == b2 and e1 > e2


def _during(b1, e1, b2, e2):
    return b1 > b2 and e1 < e2


def _contains(b1, e1, b2, e2):
    return b1 < b2 and e1 > e2


def _finishes(b1, e1, b2, e2):
    return e1 == e2 and b1 > b2


def _finished_by(b1, e1, b2, e2):
    return e1 == e2 and b1 < b2


def _equals(b1, e1, b2, e2):
    return b1 == b2 and e1 == e2


PREDICATES = {
    AllenRelation.BEFORE: _before,
    AllenRelation.AFTER: _after,
    AllenRelation.MEETS: _meets,
    AllenRelation.MET_BY: _met_by,
    AllenRelation.OVERLAPS: _overlaps,
    AllenRelation.OVERLAPPED_BY: _overlapped_by,
    AllenRelation.STARTS: _starts,
    AllenRelation.STARTED_BY: _started_by,
    AllenRelation.DURING: _during,
    AllenRelation.CONTAINS: _contains,
    AllenRelation.FINISHES: _finishes,
    AllenRelation.FINISHED_BY: _finished_by,
    AllenRelation.EQUALS: _equals,
}


def holds(rel: AllenRelation, t1, t2) -> bool:
    """Whether ``rel(t1, t2)`` holds, evaluated from its own definition."""
    return PREDICATES[AllenRelation(rel)](t1[0], t1[1], t2[0], t2[1])


def classify_endpoints(b1: int, e1: int, b2: int, e2: int) -> int:
    if b1 == b2:
        if e1 == e2:
            return AllenRelation.EQUALS
        return AllenRelation.STARTS if e1 < e2 else AllenRelation.STARTED_BY
    if e1 == e2:
        return AllenRelation.FINISHES if b1 > b2 else AllenRelation.FINISHED_BY
    if b1 < b2:
        if e1 > e2:
            return AllenRelation.CONTAINS
        if e1 < b2:
            return AllenRelation.BEFORE
        if e1 == b2:
            return AllenRelation.MEETS
        return AllenRelation.OVERLAPS
    if e1 < e2:
        return AllenRelation.DURING
    if b1 > e2:
        return AllenRelation.AFTER
    if b1 == e2:
        return AllenRelation.MET_BY
    return AllenRelation.OVERLAPPED_BY


def classify(t1, t2) -> AllenRelation:
    """Return the unique Allen relation between intervals ``t1`` and ``t2``.

    >>> classify((1899, 1902), (1901, 1905)).tag
    'overlaps'
    """
    b1, e1 = t1
    b2, e2 = t2
    if b1 > e1 or b2 > e2:
        raise ValueError(f"invalid interval pair {t1!r}, {t2!r}")
    return AllenRelation(classify_endpoints(b1, e1, b2, e2))


def classify_many(b1, e1, b2, e2) -> np.ndarray:
    """Vectorized :func:`classify` over endpoint arrays; returns int8 codes."""
    b1, e1, b2, e2 = (np.asarray(a, dtype=np.int64) for a in (b1, e1, b2, e2))
    conditions = [
        (b1 == b2) & (e1 == e2),
        (b1 == b2) & (e1 < e2),
        (b1 == b2) & (e1 > e2),
        (e1 == e2) & (b1 > b2),
        (e1 == e2) & (b1 < b2),
        (b1 < b2) & (e1 > e2),
        (b1 > b2) & (e1 < e2),
        e1 < b2,
        (e1 == b2) & (b1 < b2),
        (b1 < b2) & (e1 < e2),
        b1 > e2,
        (b1 == e2) & (b1 > b2),
    ]
    codes = [
        AllenRelation.EQUALS,
        AllenRelation.STARTS,
        AllenRelation.STARTED_BY,
        AllenRelation.FINISHES,
        AllenRelation.FINISHED_BY,
        AllenRelation.CONTAINS,
        AllenRelation.DURING,
        AllenRelation.BEFORE,
        AllenRelation.MEETS,
        AllenRelation.OVERLAPS,
        AllenRelation.AFTER,
        AllenRelation.MET_BY,
    ]
    return np.select(conditions, codes, default=AllenRelation.OVERLAPPED_BY).astype(np.int8)


def invert(rel: AllenRelation) -> AllenRelation:
    """Converse relation: ``invert(classify(a, b)) == classify(b, a)``."""
    rel = AllenRelation(rel)
    if rel is AllenRelation.EQUALS:
        return rel
    return AllenRelation(rel ^ 1)


# Candidate ranges work in vocabulary-id space: ids are contiguous, so every
# "some year exists strictly between x and y" test becomes an id comparison.
def start_id_bounds(rel: AllenRelation, b: int, e: int, n: int) -> tuple[int, int]:
    """Half-open id range of feasible start ids for ``T1`` given ``rel(T1, T2)``.

    ``T2 = [b, e]`` is given as vocabulary ids and ``n`` is the vocabulary
    size. The unknown end of ``T1`` ranges over the vocabulary.
    """
    rel = AllenRelation(rel)
    last = n - 1
    A = AllenRelation
    if rel is A.BEFORE:
        return 0, b
    if rel is A.AFTER:
        return e + 1, n
    if rel is A.MEETS:
        return (0, b) if b < e else (0, 0)
    if rel is A.MET_BY:
        return (e, e + 1) if b < e and e < last else (0, 0)
    if rel is A.OVERLAPS:
        return (0, b) if e - b >= 2 else (0, 0)
    if rel is A.OVERLAPPED_BY:
        return (b + 1, e) if e < last else (0, 0)
    if rel is A.STARTS:
        return (b, b + 1) if b < e else (0, 0)
    if rel is A.STARTED_BY:
        return (b, b + 1) if e < last else (0, 0)
    if rel is A.DURING:
        return b + 1, e
    if rel is A.CONTAINS:
        return (0, b) if e < last else (0, 0)
    if rel is A.FINISHES:
        return b + 1, e + 1
    if rel is A.FINISHED_BY:
        return 0, b
    return b, b + 1


def end_id_bounds(rel: AllenRelation, b: int, e: int, n: int) -> tuple[int, int]:
    """Half-open id range of feasible end ids; the unknown start ranges over ids <= end."""
    rel = AllenRelation(rel)
    A = AllenRelation
    if rel is A.BEFORE:
        return 0, b
    if rel is A.AFTER:
        return e + 1, n
    if rel is A.MEETS:
        return (b, b + 1) if b < e and b > 0 else (0, 0)
    if rel is A.MET_BY:
        return (e + 1, n) if b < e else (0, 0)
    if rel is A.OVERLAPS:
        return (b + 1, e) if b > 0 else (0, 0)
    if rel is A.OVERLAPPED_BY:
        return (e + 1, n) if e - b >= 2 else (0, 0)
    if rel is A.STARTS:
        return b, e
    if rel is A.STARTED_BY:
        return e + 1, n
    if rel is A.DURING:
        return b + 1, e
    if rel is A.CONTAINS:
        return (e + 1, n) if b > 0 else (0, 0)
    if rel is A.FINISHES:
        return (e, e + 1) if b < e else (0, 0)
    if rel is A.FINISHED_BY:
        return (e, e + 1) if b > 0 else (0, 0)
    return e, e + 1


def _normalize(bounds: tuple[int, int]) -> tuple[int, int]:
    lo, hi = bounds
    return (lo, hi) if lo < hi else (0, 0)


def candidate_start_range(rel: AllenRelation, t2, vocab) -> list[int]:
    """Years ``t`` such that some ``T1 = [t, t']`` in the vocabulary satisfies ``rel(T1, t2)``."""
    lo, hi = _normalize(start_id_bounds(rel, vocab.id(t2[0]), vocab.id(t2[1]), len(vocab)))
    return [int(y) for y in vocab.years[lo:hi]]


def candidate_end_range(rel: AllenRelation, t2, vocab) -> list[int]:
    """Years ``t`` such that some ``T1 = [t', t]`` in the vocabulary satisfies ``rel(T1, t2)``."""
    lo, hi = _normalize(end_id_bounds(rel, vocab.id(t2[0]), vocab.id(t2[1]), len(vocab)))
    return [int(y) for y in vocab.years[lo:hi]]
