"""All-walks rule extraction, rule sets, and PCA confidences."""
from __future__ import annotations

import hashlib
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .allen import AllenRelation, classify, end_id_bounds, start_id_bounds
from .core import Quadruple, TimeInterval, TimeVocab, TkgDataset, WalkGraph, build_time_vocab, build_walk_graph

logger = logging.getLogger(__name__)

OBJECT, START, END = 0, 1, 2
TARGETS = {"object": OBJECT, "start": START, "end": END}


@dataclass(frozen=True, order=True)
class TemporalRule:
    """``head <- A1 & r1 & A2 & r2 ...`` with ``body`` as ``(allen, relation)`` pairs."""

    head: int
    body: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.body:
            raise ValueError("rule body must have at least one atom")

    @property
    def length(self) -> int:
        return len(self.body)

    @property
    def allens(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.body)

    @property
    def rels(self) -> tuple[int, ...]:
        return tuple(r for _, r in self.body)

    @cached_property
    def rel_array(self) -> np.ndarray:
        return np.array(self.rels, dtype=np.int64)

    @cached_property
    def allen_array(self) -> np.ndarray:
        return np.array(self.allens, dtype=np.int64)

    def render(self, relations: list[str]) -> str:
        """Compact form, e.g. ``wBi <- during & iMt & equals & wBi``."""
        atoms = []
        for a, r in self.body:
            atoms += [AllenRelation(a).tag, relations[r]]
        return f"{relations[self.head]} <- " + " & ".join(atoms)


@dataclass
class GroundedWalk:
    start: int
    end: int
    head_interval: TimeInterval
    steps: list[tuple[int, TimeInterval, int, int]]  # (relation, interval, entity reached, fact id)


def _edge_steps(graph: WalkGraph, edges) -> list[tuple[int, TimeInterval, int, int]]:
    return [
        (int(graph.rel[i]), TimeInterval(int(graph.tb[i]), int(graph.te[i])), int(graph.nbr[i]), int(graph.fact[i]))
        for i in edges
        if i >= 0
    ]


def find_fact(graph: WalkGraph, q: Quadruple) -> int:
    """Fact id of the train edge equal to ``q``, or -1."""
    if q.s >= graph.num_entities:
        return -1
    for i in range(graph.indptr[q.s], graph.indptr[q.s + 1]):
        if graph.rel[i] == q.r and graph.nbr[i] == q.o and graph.tb[i] == q.tb and graph.te[i] == q.te:
            return int(graph.fact[i])
    return -1


def mine_walks(graph: WalkGraph, head: Quadruple, max_len: int, head_fact: int | None = None) -> list[GroundedWalk]:
    """Every walk of 1..max_len edges from ``head.s`` to ``head.o``.

    The head fact and its inverse twin never appear in a walk.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if head_fact is None:
        head_fact = find_fact(graph, head)
    if head.s >= graph.num_entities or graph.num_edges == 0:
        return []
    rows = kernels.enumerate_walks(graph.indptr, graph.nbr, graph.fact, head.s, head.o, max_len, head_fact)
    return [GroundedWalk(head.s, head.o, head.interval, _edge_steps(graph, row)) for row in rows]


def lift_to_rule(head: Quadruple, walk: GroundedWalk) -> TemporalRule:
    body = []
    prev = head.interval
    for rel, interval, _, _ in walk.steps:
        body.append((int(classify(prev, interval)), rel))
        prev = interval
    return TemporalRule(head.r, tuple(body))


def _lift_rows(graph: WalkGraph, head: Quadruple, rows: np.ndarray) -> list[tuple]:
    """Vectorized :func:`lift_to_rule` over padded walk rows; returns body tuples."""
    if len(rows) == 0:
        return []
    valid = rows >= 0
    safe = np.where(valid, rows, 0)
    tb, te, rel = graph.tb[safe], graph.te[safe], graph.rel[safe]
    prev_b = np.concatenate([np.full((len(rows), 1), head.tb), tb[:, :-1]], axis=1)
    prev_e = np.concatenate([np.full((len(rows), 1), head.te), te[:, :-1]], axis=1)
    allen = kernels.classify_many(prev_b.ravel(), prev_e.ravel(), tb.ravel(), te.ravel()).reshape(rows.shape)
    lengths = valid.sum(axis=1)
    out = []
    for k in range(len(rows)):
        m = int(lengths[k])
        out.append(tuple((int(allen[k, j]), int(rel[k, j])) for j in range(m)))
    return out


class RuleSet:
    """Deduplicated rules in a stable order with support and PCA confidences.

    ``pca[i]`` holds the object, start and end confidences of ``rules[i]``.
    """

    def __init__(self, rules, support=None, pca=None):
        rules = list(rules)
        order = sorted(range(len(rules)), key=lambda i: rules[i])
        self.rules: list[TemporalRule] = [rules[i] for i in order]
        if len(set(self.rules)) != len(self.rules):
            raise ValueError("duplicate rules in rule set")
        n = len(self.rules)
        self.support = np.zeros(n, np.int64) if support is None else np.asarray(support, np.int64)[order]
        self.pca = np.zeros((n, 3)) if pca is None else np.asarray(pca, dtype=np.float64).reshape(n, 3)[order]
        self._index = {rule: i for i, rule in enumerate(self.rules)}
        self._by_head: dict[int, np.ndarray] = {}
        heads = np.array([r.head for r in self.rules], dtype=np.int64)
        for h in np.unique(heads):
            self._by_head[int(h)] = np.flatnonzero(heads == h)
        self.lengths = np.array([r.length for r in self.rules], dtype=np.int64)
        L = int(self.lengths.max()) if n else 1
        self.allen_ids = np.zeros((n, L), np.int64)
        self.rel_ids = np.zeros((n, L), np.int64)
        for i, rule in enumerate(self.rules):
            self.allen_ids[i, : rule.length] = rule.allens
            self.rel_ids[i, : rule.length] = rule.rels

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __contains__(self, rule) -> bool:
        return rule in self._index

    def index(self, rule: TemporalRule) -> int:
        return self._index[rule]

    def for_head(self, r: int) -> np.ndarray:
        return self._by_head.get(int(r), np.zeros(0, np.int64))

    @property
    def heads(self) -> list[int]:
        return sorted(self._by_head)

    def without(self, drop: TemporalRule) -> "RuleSet":
        keep = [i for i, r in enumerate(self.rules) if r != drop]
        return RuleSet([self.rules[i] for i in keep], self.support[keep], self.pca[keep])

    def to_tsv(self, relations: list[str]) -> str:
        lines = []
        for rule, sup, (po, pb, pe) in zip(self.rules, self.support, self.pca.tolist()):
            body = " ".join(f"{AllenRelation(a).tag} {relations[r]}" for a, r in rule.body)
            lines.append(f"{relations[rule.head]}\t{body}\t{int(sup)}\t{po!r}\t{pb!r}\t{pe!r}")
        return "".join(line + "\n" for line in lines)

    def digest(self, relations: list[str]) -> str:
        return hashlib.sha256(self.to_tsv(relations).encode("utf-8")).hexdigest()

    def save(self, path, relations: list[str]) -> None:
        Path(path).write_text(self.to_tsv(relations), encoding="utf-8")

    @classmethod
    def from_tsv(cls, text: str, relations: list[str]) -> "RuleSet":
        rel_ids = {name: i for i, name in enumerate(relations)}
        rules, support, pca = [], [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise ValueError(f"rule file line {lineno}: expected 6 columns")
            tokens = cols[1].split()
            if not tokens or len(tokens) % 2:
                raise ValueError(f"rule file line {lineno}: malformed body")
            try:
                body = tuple(
                    (int(AllenRelation.from_tag(tokens[k])), rel_ids[tokens[k + 1]]) for k in range(0, len(tokens), 2)
                )
                rules.append(TemporalRule(rel_ids[cols[0]], body))
            except KeyError as exc:
                raise ValueError(f"rule file line {lineno}: unknown relation {exc}") from None
            support.append(int(cols[2]))
            pca.append([float(c) for c in cols[3:6]])
        return cls(rules, support, pca)

    @classmethod
    def load(cls, path, relations: list[str]) -> "RuleSet":
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"), relations)


# ---------------------------------------------------------------------------
# PCA confidences


@dataclass
class PcaContext:
    """Train positives indexed for PCA counting."""

    graph: WalkGraph
    vocab: TimeVocab
    # relation -> {(s, tb, te): {o: fact}}
    by_subject_time: dict = field(default_factory=dict)
    # relation -> {(s, o): [(tb, te, fact), ...]}
    by_pair: dict = field(default_factory=dict)

    @classmethod
    def build(cls, dataset: TkgDataset, graph: WalkGraph | None = None, vocab: TimeVocab | None = None):
        graph = graph if graph is not None else build_walk_graph(dataset)
        vocab = vocab if vocab is not None else build_time_vocab(dataset)
        ctx = cls(graph, vocab, defaultdict(lambda: defaultdict(dict)), defaultdict(lambda: defaultdict(list)))
        train = dataset.splits["train"]
        n = len(train) // 2
        for i, (s, r, o, b, e) in enumerate(train.tolist()):
            ctx.by_subject_time[r][(s, b, e)][o] = i % n
            ctx.by_pair[r][(s, o)].append((b, e, i % n))
        return ctx


def _ground(graph: WalkGraph, rule: TemporalRule, src, q_tb, q_te, check_first, dst=-1):
    return kernels.ground_body(
        graph.indptr, graph.rel, graph.tb, graph.te, graph.nbr, graph.fact,
        src, q_tb, q_te, rule.rel_array, rule.allen_array,
        check_first, -1, dst,
    )


def pca_score_link(rule: TemporalRule, dataset: TkgDataset | None = None, ctx: PcaContext | None = None) -> float:
    """PCA confidence of ``rule`` for object prediction.

    Counts ``(s, o, T)`` reached by a body grounding from a subject/interval
    pair that has some positive head fact; a grounding may not use the head
    fact it would confirm.
    """
    if ctx is None:
        ctx = PcaContext.build(dataset)
    graph = ctx.graph
    num = den = 0
    for (s, b, e), objs in ctx.by_subject_time.get(rule.head, {}).items():
        paths = _ground(graph, rule, s, b, e, True)
        if len(paths) == 0:
            continue
        reached = set()
        for path in paths:
            o = int(graph.nbr[path[-1]])
            if o in reached:
                continue
            witness = objs.get(o)
            if witness is not None and witness in graph.fact[path]:
                continue
            reached.add(o)
        den += len(reached)
        num += sum(1 for o in reached if o in objs)
    return num / den if den else 0.0


def pca_score_time(rule: TemporalRule, which: str, dataset: TkgDataset | None = None, ctx: PcaContext | None = None) -> float:
    """PCA confidence of ``rule`` for start (``which='start'``) or end prediction.

    Counts ``(s, o, t)`` where ``t`` is a year admitted by the first Allen
    atom for some grounding ``s -> o``, over pairs with a positive head fact.
    """
    if which not in ("start", "end"):
        raise ValueError("which must be 'start' or 'end'")
    if ctx is None:
        ctx = PcaContext.build(dataset)
    graph, vocab = ctx.graph, ctx.vocab
    n = len(vocab)
    bounds = start_id_bounds if which == "start" else end_id_bounds
    a1 = rule.allens[0]
    num = den = 0
    for (s, o), positives in ctx.by_pair.get(rule.head, {}).items():
        paths = _ground(graph, rule, s, 0, 0, False, dst=o)
        if len(paths) == 0:
            continue
        gold_ids = {vocab.id(b if which == "start" else e) for b, e, _ in positives}
        grounded: set[int] = set()
        for path in paths:
            first = path[0]
            lo, hi = bounds(a1, vocab.id(graph.tb[first]), vocab.id(graph.te[first]), n)
            if lo >= hi:
                continue
            used = set(graph.fact[path].tolist())
            blocked = {vocab.id(b if which == "start" else e) for b, e, f in positives if f in used}
            grounded.update(t for t in range(lo, hi) if t not in blocked)
        den += len(grounded)
        num += len(grounded & gold_ids)
    return num / den if den else 0.0


def mine_ruleset(
    dataset: TkgDataset,
    max_len: int = 3,
    min_support: int = 1,
    with_pca: bool = True,
    graph: WalkGraph | None = None,
    vocab: TimeVocab | None = None,
) -> RuleSet:
    """Mine rules from every train quadruple (inverse twins included) as head."""
    graph = graph if graph is not None else build_walk_graph(dataset)
    train = dataset.splits["train"]
    n = len(train) // 2
    counts: Counter = Counter()
    for i, row in enumerate(train.tolist()):
        head = Quadruple(*row)
        rows = kernels.enumerate_walks(graph.indptr, graph.nbr, graph.fact, head.s, head.o, max_len, i % n)
        for body in _lift_rows(graph, head, rows):
            counts[(head.r, body)] += 1
    keys = sorted(k for k, c in counts.items() if c >= min_support)
    rules = [TemporalRule(h, body) for h, body in keys]
    support = [counts[k] for k in keys]
    pca = np.zeros((len(rules), 3))
    if with_pca and rules:
        vocab = vocab if vocab is not None else build_time_vocab(dataset)
        ctx = PcaContext.build(dataset, graph, vocab)
        for j, rule in enumerate(rules):
            pca[j] = (
                pca_score_link(rule, ctx=ctx),
                pca_score_time(rule, "start", ctx=ctx),
                pca_score_time(rule, "end", ctx=ctx),
            )
    logger.info("mined %d rules from %d head quadruples", len(rules), len(train))
    return RuleSet(rules, support, pca)
