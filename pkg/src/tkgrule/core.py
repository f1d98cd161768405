"""Dataset model, ingestion, inverse augmentation, year vocabulary and walk graph."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
INVERSE_SUFFIX = "^-1"

_YEAR_RE = re.compile(r"^\s*(-?\d{1,4})(?:-[\d#]{1,2}-[\d#]{1,2})?\s*$")


class DatasetError(Exception):
    pass


class TimeInterval(NamedTuple):
    tb: int
    te: int


class Quadruple(NamedTuple):
    s: int
    r: int
    o: int
    tb: int
    te: int

    @property
    def interval(self) -> TimeInterval:
        return TimeInterval(self.tb, self.te)


def _empty_split() -> np.ndarray:
    return np.zeros((0, 5), dtype=np.int64)


@dataclass
class TkgDataset:
    """Interval-stamped quadruples split into train/valid/test.

    Each split is an ``(n, 5)`` int64 array of ``(s, r, o, tb, te)`` rows.
    After :func:`augment_inverses` the second half of every split holds the
    inverse twins, so row ``i`` and row ``i + n // 2`` describe one fact.
    """

    entities: list[str]
    relations: list[str]
    num_base_relations: int
    splits: dict[str, np.ndarray] = field(default_factory=dict)
    augmented: bool = False

    def __post_init__(self):
        self._entity_ids = {name: i for i, name in enumerate(self.entities)}
        self._relation_ids = {name: i for i, name in enumerate(self.relations)}
        for name in SPLITS:
            self.splits.setdefault(name, _empty_split())

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise DatasetError(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise DatasetError(f"unknown relation {name!r}") from None

    def inverse(self, r: int) -> int:
        if not self.augmented:
            raise DatasetError("dataset has no inverse relations")
        R = self.num_base_relations
        return r + R if r < R else r - R

    def quads(self, split: str = "train") -> Iterator[Quadruple]:
        for row in self.splits[split]:
            yield Quadruple(*(int(v) for v in row))

    def num_facts(self, split: str) -> int:
        """Number of original facts in a split (twins not counted)."""
        n = len(self.splits[split])
        return n // 2 if self.augmented else n

    def years(self) -> np.ndarray:
        parts = [arr[:, 3:5].ravel() for arr in self.splits.values()]
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, np.int64)

    def summary(self) -> str:
        """Line-oriented statistics in the usual benchmark-table layout."""
        intervals = set()
        for arr in self.splits.values():
            intervals.update(map(tuple, arr[:, 3:5].tolist()))
        lines = [
            f"#Entities\t{self.num_entities}",
            f"#Relations\t{self.num_base_relations}",
            f"#Instants\t{len(self.years())}",
            f"#Intervals\t{len(intervals)}",
            f"#Training\t{self.num_facts('train')}",
            f"#Validation\t{self.num_facts('valid')}",
            f"#Test\t{self.num_facts('test')}",
        ]
        return "\n".join(lines)


def parse_year(text: str) -> int | None:
    """Year of a date cell, or None when unknown (``####``, ``####-##-##``, empty)."""
    text = text.strip()
    if not text or text.startswith("#"):
        return None
    m = _YEAR_RE.match(text)
    if m is None:
        raise ValueError(f"unparseable date {text!r}")
    return int(m.group(1))


def _split_file(directory: Path, split: str) -> Path:
    for candidate in (f"{split}.txt", f"{split}.tsv", split):
        path = directory / candidate
        if path.is_file():
            return path
    raise DatasetError(f"missing file: {split} split not found in {directory}")


def load_dataset(path) -> TkgDataset:
    """Read ``train``/``valid``/``test`` tab-separated files from a directory.

    Lines are ``subject, relation, object, begin, end``. Dates keep only the
    year; an unknown begin becomes the smallest observed year and an unknown
    end the largest. Lines with begin after end are dropped with a warning.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise DatasetError(f"missing file: {directory} is not a directory")
    files = {split: _split_file(directory, split) for split in SPLITS}

    raw: dict[str, list[tuple[str, str, str, int | None, int | None, int]]] = {}
    for split, fname in files.items():
        rows = []
        with open(fname, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n\r")
                if not line.strip():
                    continue
                cols = line.split("\t")
                if len(cols) != 5:
                    raise DatasetError(f"{fname}:{lineno}: expected 5 tab-separated columns, got {len(cols)}")
                s, r, o, b, e = cols
                try:
                    rows.append((s.strip(), r.strip(), o.strip(), parse_year(b), parse_year(e), lineno))
                except ValueError as exc:
                    raise DatasetError(f"{fname}:{lineno}: {exc}") from None
        raw[split] = rows

    known = [y for rows in raw.values() for row in rows for y in row[3:5] if y is not None]
    if not known:
        raise DatasetError(f"no dated facts in {directory}")
    t_min, t_max = min(known), max(known)

    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    splits = {}
    for split, rows in raw.items():
        out = []
        for s, r, o, b, e, lineno in rows:
            b = t_min if b is None else b
            e = t_max if e is None else e
            if b > e:
                logger.warning("%s:%d: begin %d after end %d, line dropped", files[split], lineno, b, e)
                continue
            si = entities.setdefault(s, len(entities))
            ri = relations.setdefault(r, len(relations))
            oi = entities.setdefault(o, len(entities))
            out.append((si, ri, oi, b, e))
        splits[split] = np.array(out, dtype=np.int64).reshape(-1, 5)

    return TkgDataset(
        entities=list(entities),
        relations=list(relations),
        num_base_relations=len(relations),
        splits=splits,
    )


def save_dataset(dataset: TkgDataset, path) -> None:
    """Write the original (non-inverse) facts back out as tab-separated files."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        arr = dataset.splits[split][: dataset.num_facts(split)]
        with open(directory / f"{split}.txt", "w", encoding="utf-8") as fh:
            for s, r, o, b, e in arr.tolist():
                fh.write(f"{dataset.entities[s]}\t{dataset.relations[r]}\t{dataset.entities[o]}\t{b}\t{e}\n")


def augment_inverses(dataset: TkgDataset) -> TkgDataset:
    """Return a copy where every ``(s, r, o, T)`` has a twin ``(o, r + |R|, s, T)``."""
    if dataset.augmented:
        raise DatasetError("inverse relations already added")
    R = dataset.num_base_relations
    splits = {}
    for name, arr in dataset.splits.items():
        twins = arr[:, [2, 1, 0, 3, 4]].copy()
        twins[:, 1] += R
        splits[name] = np.concatenate([arr, twins])
    return replace(
        dataset,
        relations=list(dataset.relations) + [name + INVERSE_SUFFIX for name in dataset.relations],
        splits=splits,
        augmented=True,
    )


class TimeVocab:
    """Sorted distinct years with a dense id per year."""

    def __init__(self, years):
        years = np.unique(np.asarray(years, dtype=np.int64))
        if len(years) < 2:
            raise DatasetError("time vocabulary needs at least two distinct years")
        self.years = years
        self._ids = {int(y): i for i, y in enumerate(years)}

    def __len__(self) -> int:
        return len(self.years)

    def __contains__(self, year) -> bool:
        return int(year) in self._ids

    @property
    def max_id_diff(self) -> int:
        return len(self.years) - 1

    @property
    def t_min(self) -> int:
        return int(self.years[0])

    @property
    def t_max(self) -> int:
        return int(self.years[-1])

    def id(self, year) -> int:
        try:
            return self._ids[int(year)]
        except KeyError:
            raise KeyError(f"year {year} not in time vocabulary") from None

    def ids(self, years) -> np.ndarray:
        years = np.asarray(years, dtype=np.int64)
        idx = np.searchsorted(self.years, years)
        if np.any(idx >= len(self.years)) or np.any(self.years[np.minimum(idx, len(self.years) - 1)] != years):
            raise KeyError("year not in time vocabulary")
        return idx

    def year(self, idx: int) -> int:
        return int(self.years[idx])


def build_time_vocab(dataset: TkgDataset) -> TimeVocab:
    return TimeVocab(dataset.years())


def time_distance(vocab: TimeVocab, t_a, t_b) -> float:
    """Id-space distance between two years, scaled into [0, 1]."""
    return abs(vocab.id(t_a) - vocab.id(t_b)) / vocab.max_id_diff


class WalkGraph:
    """Train-split adjacency in CSR form.

    Edges leaving entity ``e`` occupy ``indptr[e]:indptr[e + 1]`` of the
    parallel arrays ``rel``, ``tb``, ``te``, ``nbr`` and ``fact``. ``fact`` is
    shared by a quadruple and its inverse twin.
    """

    def __init__(self, num_entities: int, quads: np.ndarray, facts: np.ndarray):
        order = np.lexsort((quads[:, 2], quads[:, 1], quads[:, 0])) if len(quads) else np.zeros(0, np.int64)
        q = quads[order]
        self.num_entities = num_entities
        counts = np.bincount(q[:, 0], minlength=num_entities) if len(q) else np.zeros(num_entities, np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.rel = np.ascontiguousarray(q[:, 1], dtype=np.int64)
        self.nbr = np.ascontiguousarray(q[:, 2], dtype=np.int64)
        self.tb = np.ascontiguousarray(q[:, 3], dtype=np.int64)
        self.te = np.ascontiguousarray(q[:, 4], dtype=np.int64)
        self.fact = np.ascontiguousarray(facts[order], dtype=np.int64)

    @property
    def num_edges(self) -> int:
        return len(self.rel)

    def out_edges(self, entity: int) -> list[tuple[int, TimeInterval, int, int]]:
        """``(relation, interval, neighbor, fact id)`` for every edge leaving ``entity``."""
        lo, hi = self.indptr[entity], self.indptr[entity + 1]
        return [
            (int(self.rel[i]), TimeInterval(int(self.tb[i]), int(self.te[i])), int(self.nbr[i]), int(self.fact[i]))
            for i in range(lo, hi)
        ]

    def out_relations(self, entity: int) -> set[int]:
        if not 0 <= entity < self.num_entities:
            return set()
        return set(self.rel[self.indptr[entity]: self.indptr[entity + 1]].tolist())

    def edge(self, i: int) -> Quadruple:
        src = int(np.searchsorted(self.indptr, i, side="right") - 1)
        return Quadruple(src, int(self.rel[i]), int(self.nbr[i]), int(self.tb[i]), int(self.te[i]))

    def adjacency(self) -> dict[int, list]:
        return {e: self.out_edges(e) for e in range(self.num_entities) if self.indptr[e + 1] > self.indptr[e]}


def build_walk_graph(dataset: TkgDataset) -> WalkGraph:
    if not dataset.augmented:
        raise DatasetError("walk graph requires an inverse-augmented dataset")
    train = dataset.splits["train"]
    n = len(train) // 2
    facts = np.concatenate([np.arange(n), np.arange(n)]).astype(np.int64)
    return WalkGraph(dataset.num_entities, train, facts)


def fact_index(dataset: TkgDataset, split: str = "train") -> dict[Quadruple, int]:
    """Map each (augmented) quadruple of a split to its shared fact id."""
    arr = dataset.splits[split]
    n = len(arr) // 2 if dataset.augmented else len(arr)
    return {Quadruple(*row): i % n if n else i for i, row in enumerate(arr.tolist())}
