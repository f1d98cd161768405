"""Gaussian time-gap statistics fitted on the train split."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import TimeVocab, TkgDataset

SIGMA_FLOOR = 1.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gaussian_density(gap, mu: float, sigma: float):
    """Normal density of ``gap``; works on scalars and arrays."""
    z = (np.asarray(gap, dtype=np.float64) - mu) / sigma
    out = np.exp(-0.5 * z * z) / (sigma * _SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def gaussian_kernel(gap, mu: float, sigma: float):
    """Density rescaled so its peak is 1."""
    z = (np.asarray(gap, dtype=np.float64) - mu) / sigma
    out = np.exp(-0.5 * z * z)
    return float(out) if out.ndim == 0 else out


def _fit(samples) -> tuple[float, float]:
    arr = np.asarray(samples, dtype=np.float64)
    return float(arr.mean()), max(float(arr.std()), SIGMA_FLOOR)


@dataclass
class PairStats:
    """Start/end gap Gaussians per ``(head relation, first body relation)``."""

    params: dict[tuple[int, int], tuple[float, float, float, float]] = field(default_factory=dict)
    counts: dict[tuple[int, int], int] = field(default_factory=dict)
    default: tuple[float, float, float, float] = (0.0, SIGMA_FLOOR, 0.0, SIGMA_FLOOR)

    def lookup(self, r_h: int, r_1: int) -> tuple[float, float, float, float]:
        return self.params.get((r_h, r_1), self.default)

    def start(self, r_h: int, r_1: int) -> tuple[float, float]:
        mu_s, sd_s, _, _ = self.lookup(r_h, r_1)
        return mu_s, sd_s

    def end(self, r_h: int, r_1: int) -> tuple[float, float]:
        _, _, mu_e, sd_e = self.lookup(r_h, r_1)
        return mu_e, sd_e


def _subject_groups(train: np.ndarray):
    """Yield row-index arrays of train facts sharing a subject."""
    if len(train) == 0:
        return
    order = np.argsort(train[:, 0], kind="stable")
    subjects = train[order, 0]
    cuts = np.flatnonzero(np.diff(subjects)) + 1
    yield from np.split(order, cuts)


def _pair_gaps(dataset: TkgDataset):
    """Relation-pair keys and start/end gaps over ordered pairs of distinct facts sharing a subject."""
    train = dataset.splits["train"]
    n = len(train) // 2 if dataset.augmented else len(train)
    facts = np.arange(len(train)) % max(n, 1)
    keys, gs, ge = [], [], []
    for idx in _subject_groups(train):
        if len(idx) < 2:
            continue
        rows = train[idx]
        a, b = np.meshgrid(np.arange(len(idx)), np.arange(len(idx)), indexing="ij")
        keep = facts[idx][a] != facts[idx][b]
        a, b = a[keep], b[keep]
        keys.append(rows[a, 1] * dataset.num_relations + rows[b, 1])
        gs.append(rows[a, 3] - rows[b, 3])
        ge.append(rows[a, 4] - rows[b, 4])
    if not keys:
        empty = np.zeros(0, np.int64)
        return empty, empty, empty
    return np.concatenate(keys), np.concatenate(gs), np.concatenate(ge)


def _grouped(keys: np.ndarray, values: np.ndarray):
    order = np.argsort(keys, kind="stable")
    uniq, first = np.unique(keys[order], return_index=True)
    return zip(uniq.tolist(), np.split(values[order], first[1:]))


def fit_pair_stats(dataset: TkgDataset) -> PairStats:
    """Gap ``head.start - other.start`` (and end) over distinct train facts sharing a subject."""
    keys, gs, ge = _pair_gaps(dataset)
    stats = PairStats()
    if len(keys) == 0:
        return stats
    R = dataset.num_relations
    for (k, s_gaps), (_, e_gaps) in zip(_grouped(keys, gs), _grouped(keys, ge)):
        key = divmod(k, R)
        stats.params[key] = (*_fit(s_gaps), *_fit(e_gaps))
        stats.counts[key] = len(s_gaps)
    stats.default = (*_fit(gs), *_fit(ge))
    return stats


@dataclass
class GadgetStats:
    """Recurrence gaps per relation and start gaps per relation pair, plus eta."""

    recurrence: dict[int, tuple[float, float]] = field(default_factory=dict)
    pair: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    eta: float = 0.0


def fit_gadget_stats(dataset: TkgDataset, eta: float) -> GadgetStats:
    train = dataset.splits["train"]
    rec: dict = defaultdict(list)
    for idx in _subject_groups(train):
        rows = train[idx]
        for r in np.unique(rows[:, 1]):
            tb = np.sort(rows[rows[:, 1] == r, 3])
            if len(tb) > 1:
                rec[int(r)].extend(np.diff(tb).tolist())
    keys, gs, _ = _pair_gaps(dataset)
    R = dataset.num_relations
    pair = {divmod(k, R): _fit(g) for k, g in _grouped(keys, gs)} if len(keys) else {}
    return GadgetStats(
        recurrence={r: _fit(g) for r, g in sorted(rec.items())},
        pair=pair,
        eta=float(eta),
    )


@dataclass
class RelationMeans:
    """Mean start id and mean (end - start) id offset per relation."""

    means: dict[int, tuple[float, float]] = field(default_factory=dict)
    global_mean: tuple[float, float] = (0.0, 0.0)

    def get(self, r: int) -> tuple[float, float]:
        return self.means.get(r, self.global_mean)


def fit_relation_means(dataset: TkgDataset, vocab: TimeVocab) -> RelationMeans:
    train = dataset.splits["train"]
    if len(train) == 0:
        return RelationMeans()
    sid = vocab.ids(train[:, 3])
    off = vocab.ids(train[:, 4]) - sid
    out = RelationMeans(global_mean=(float(sid.mean()), float(off.mean())))
    for r in np.unique(train[:, 1]):
        mask = train[:, 1] == r
        out.means[int(r)] = (float(sid[mask].mean()), float(off[mask].mean()))
    return out
