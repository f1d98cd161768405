"""Ranking and interval-overlap metrics."""
from __future__ import annotations

import numpy as np


def filtered_rank(scores: np.ndarray, gold: int, filtered=()) -> float:
    """Rank of ``gold`` after dropping ``filtered`` candidates; ties share their mean rank."""
    keep = np.ones(len(scores), dtype=bool)
    keep[list(filtered)] = False
    keep[gold] = True
    s = scores[keep]
    g = scores[gold]
    higher = int(np.sum(s > g))
    tied = int(np.sum(s == g)) - 1
    return 1.0 + higher + tied / 2.0


def ranking_metrics(ranks) -> dict[str, float]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return {"MRR": 0.0, "Hits@1": 0.0, "Hits@10": 0.0}
    return {
        "MRR": float(np.mean(1.0 / ranks)),
        "Hits@1": float(np.mean(ranks <= 1)),
        "Hits@10": float(np.mean(ranks <= 10)),
    }


def aeiou(gold, pred) -> float:
    """Affinity-enhanced IoU of two closed year intervals.

    >>> aeiou((2000, 2003), (2002, 2005))
    0.3333333333333333
    """
    (gb, ge), (pb, pe) = gold, pred
    inter = max(0, min(ge, pe) - max(gb, pb) + 1)
    hull = max(ge, pe) - min(gb, pb) + 1
    return max(1, inter) / hull


def best_aeiou(golds, pred) -> float:
    return max(aeiou(g, pred) for g in golds)
