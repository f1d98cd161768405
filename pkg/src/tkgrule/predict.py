"""Query answering: rule grounding, candidate scores, intervals and explanations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .allen import AllenRelation, end_id_bounds, start_id_bounds
from .core import TimeInterval, TimeVocab, TkgDataset, WalkGraph
from .mining import END, OBJECT, START, RuleSet, TemporalRule
from .scorer import ModelParams, rule_scores
from .stats import GadgetStats, PairStats, RelationMeans, gaussian_kernel


@dataclass(frozen=True)
class LinkQuery:
    s: int
    r: int
    T: TimeInterval


@dataclass(frozen=True)
class TimeQuery:
    s: int
    r: int
    o: int


@dataclass
class ScoreTable:
    """Scores over a candidate domain (entities, or vocabulary year ids).

    ``contributions[c]`` lists ``(rule index, amount)`` pairs that add up to
    the rule-based part of ``scores[c]``.
    """

    scores: np.ndarray
    contributions: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    @property
    def fired(self) -> bool:
        return bool(self.contributions)


@dataclass
class Grounding:
    """Parameter-free part of a query's score, as sparse ``rule x candidate`` weights.

    ``score[c] = sum_k psi[rule_idx[rows[k]]] * vals[k]`` over ``cols[k] == c``.
    """

    rule_idx: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    size: int

    @property
    def empty(self) -> bool:
        return len(self.vals) == 0

    def aggregate(self, psi_local: np.ndarray) -> np.ndarray:
        return np.bincount(self.cols, weights=psi_local[self.rows] * self.vals, minlength=self.size)

    def rule_gradient(self, dscore: np.ndarray) -> np.ndarray:
        return np.bincount(self.rows, weights=dscore[self.cols] * self.vals, minlength=len(self.rule_idx))

    def contributions(self, psi_local: np.ndarray) -> dict[int, list[tuple[int, float]]]:
        out: dict[int, list[tuple[int, float]]] = {}
        for k in range(len(self.vals)):
            c = int(self.cols[k])
            out.setdefault(c, []).append((int(self.rule_idx[self.rows[k]]), float(psi_local[self.rows[k]] * self.vals[k])))
        return out


def _empty_grounding(size: int) -> Grounding:
    z = np.zeros(0, np.int64)
    return Grounding(z, z, z, np.zeros(0), size)


def _body_paths(graph: WalkGraph, rule: TemporalRule, src: int, T, check_first: bool, exclude_fact: int, dst: int = -1):
    if src >= graph.num_entities or graph.num_edges == 0:
        return np.zeros((0, rule.length), np.int64)
    q_tb, q_te = (T if T is not None else (0, 0))
    return kernels.ground_body(
        graph.indptr, graph.rel, graph.tb, graph.te, graph.nbr, graph.fact,
        src, q_tb, q_te, rule.rel_array, rule.allen_array,
        check_first, exclude_fact, dst,
    )


# ---------------------------------------------------------------------------
# Link prediction


def ground_rule_link(graph: WalkGraph, q: LinkQuery, rule: TemporalRule, exclude_fact: int = -1) -> dict[int, int]:
    """Terminal entity -> number of body groundings starting at ``(q.s, q.T)``."""
    if rule.head != q.r:
        raise ValueError(f"rule head {rule.head} does not match query relation {q.r}")
    paths = _body_paths(graph, rule, q.s, q.T, True, exclude_fact)
    if len(paths) == 0:
        return {}
    ends, counts = np.unique(graph.nbr[paths[:, -1]], return_counts=True)
    return dict(zip(ends.tolist(), counts.tolist()))


def ground_link_query(graph: WalkGraph, ruleset: RuleSet, q: LinkQuery, num_entities: int, exclude_fact: int = -1) -> Grounding:
    rule_idx, rows, cols, vals = [], [], [], []
    first = graph.out_relations(q.s)
    for gi in ruleset.for_head(q.r):
        if ruleset.rules[gi].body[0][1] not in first:
            continue
        hits = ground_rule_link(graph, q, ruleset.rules[gi], exclude_fact)
        if not hits:
            continue
        local = len(rule_idx)
        rule_idx.append(gi)
        for ent, cnt in hits.items():
            rows.append(local)
            cols.append(ent)
            vals.append(float(cnt))
    if not rule_idx:
        return _empty_grounding(num_entities)
    return Grounding(np.array(rule_idx), np.array(rows), np.array(cols), np.array(vals), num_entities)


def score_link(q: LinkQuery, ruleset: RuleSet, params: ModelParams, graph: WalkGraph, num_entities: int,
               grounding: Grounding | None = None) -> ScoreTable:
    """Candidate scores: for each entity, the sum of rule score times path count."""
    if grounding is None:
        grounding = ground_link_query(graph, ruleset, q, num_entities)
    if grounding.empty:
        return ScoreTable(np.zeros(num_entities))
    psi, _ = rule_scores(params, ruleset, grounding.rule_idx, q.r, (OBJECT,))
    return ScoreTable(grounding.aggregate(psi[OBJECT]), grounding.contributions(psi[OBJECT]))


# ---------------------------------------------------------------------------
# Time prediction


def _time_weights(a1: int, b: int, e: int, year_b: int, year_e: int, r_h: int, r_1: int,
                  stats: PairStats, vocab: TimeVocab, which: str):
    n = len(vocab)
    if which == "start":
        lo, hi = start_id_bounds(a1, b, e, n)
        mu, sigma = stats.start(r_h, r_1)
        anchor = year_b
    else:
        lo, hi = end_id_bounds(a1, b, e, n)
        mu, sigma = stats.end(r_h, r_1)
        anchor = year_e
    if lo >= hi:
        return np.zeros(0, np.int64), np.zeros(0)
    ids = np.arange(lo, hi)
    z = (vocab.years[ids] - anchor - mu) / sigma
    logw = -0.5 * z * z
    w = np.exp(logw - logw.max())
    return ids, w / w.sum()


def path_score_time(a1, T2, r_h: int, r_1: int, stats: PairStats, vocab: TimeVocab, which: str) -> dict[int, float]:
    """Normalized Gaussian gap score of every feasible start (or end) year for one path."""
    if which not in ("start", "end"):
        raise ValueError("which must be 'start' or 'end'")
    ids, w = _time_weights(int(AllenRelation(a1)), vocab.id(T2[0]), vocab.id(T2[1]), int(T2[0]), int(T2[1]),
                           r_h, r_1, stats, vocab, which)
    return {vocab.year(i): float(x) for i, x in zip(ids, w)}


def ground_rule_time(graph: WalkGraph, q: TimeQuery, rule: TemporalRule, exclude_fact: int = -1) -> list[TimeInterval]:
    """First-hop interval of every grounding ``q.s -> q.o`` (one entry per path)."""
    if rule.head != q.r:
        raise ValueError(f"rule head {rule.head} does not match query relation {q.r}")
    paths = _body_paths(graph, rule, q.s, None, False, exclude_fact, q.o)
    first = paths[:, 0] if len(paths) else np.zeros(0, np.int64)
    return [TimeInterval(int(b), int(e)) for b, e in zip(graph.tb[first], graph.te[first])]


def ground_time_query(graph: WalkGraph, ruleset: RuleSet, q: TimeQuery, stats: PairStats, vocab: TimeVocab,
                      exclude_fact: int = -1) -> tuple[Grounding, Grounding]:
    n = len(vocab)
    parts = {"start": ([], [], [], []), "end": ([], [], [], [])}
    first = graph.out_relations(q.s)
    for gi in ruleset.for_head(q.r):
        rule = ruleset.rules[gi]
        if rule.body[0][1] not in first:
            continue
        firsts = ground_rule_time(graph, q, rule, exclude_fact)
        if not firsts:
            continue
        a1, r1 = rule.body[0]
        for which in ("start", "end"):
            acc = np.zeros(n)
            for T2 in firsts:
                ids, w = _time_weights(a1, vocab.id(T2.tb), vocab.id(T2.te), T2.tb, T2.te, q.r, r1, stats, vocab, which)
                acc[ids] += w
            nz = np.flatnonzero(acc)
            if len(nz) == 0:
                continue
            rule_idx, rows, cols, vals = parts[which]
            rows.extend([len(rule_idx)] * len(nz))
            rule_idx.append(gi)
            cols.extend(nz.tolist())
            vals.extend(acc[nz].tolist())
    out = []
    for which in ("start", "end"):
        rule_idx, rows, cols, vals = parts[which]
        if rule_idx:
            out.append(Grounding(np.array(rule_idx), np.array(rows), np.array(cols), np.array(vals), n))
        else:
            out.append(_empty_grounding(n))
    return out[0], out[1]


def score_time(q: TimeQuery, ruleset: RuleSet, params: ModelParams, graph: WalkGraph, stats: PairStats,
               vocab: TimeVocab, groundings: tuple[Grounding, Grounding] | None = None) -> tuple[ScoreTable, ScoreTable]:
    """Start-year and end-year score tables over the vocabulary ids."""
    if groundings is None:
        groundings = ground_time_query(graph, ruleset, q, stats, vocab)
    tables = []
    for g, target in zip(groundings, (START, END)):
        if g.empty:
            tables.append(ScoreTable(np.zeros(len(vocab))))
            continue
        psi, _ = rule_scores(params, ruleset, g.rule_idx, q.r, (target,))
        tables.append(ScoreTable(g.aggregate(psi[target]), g.contributions(psi[target])))
    return tables[0], tables[1]


# ---------------------------------------------------------------------------
# Probabilities, gadgets, interval assembly


def softmax_probs(table) -> np.ndarray:
    scores = table.scores if isinstance(table, ScoreTable) else np.asarray(table, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    e = np.exp(scores - scores.max())
    return e / e.sum()


class Gadgets:
    """Subject-history bonuses from recurrence and relation-pair gap Gaussians."""

    def __init__(self, stats: GadgetStats, dataset: TkgDataset, vocab: TimeVocab):
        self.stats = stats
        self.vocab = vocab
        self.num_entities = dataset.num_entities
        self.inverse = dataset.inverse
        train = dataset.splits["train"]
        n = len(train) // 2
        self.train = train
        self.facts = np.arange(len(train)) % max(n, 1)
        order = np.argsort(train[:, 0], kind="stable")
        self._order = order
        self._indptr = np.searchsorted(train[order, 0], np.arange(dataset.num_entities + 1))

    def _subject_rows(self, s: int) -> np.ndarray:
        return self._order[self._indptr[s]: self._indptr[s + 1]]

    def link_bonus(self, q: LinkQuery, exclude_fact: int = -1) -> np.ndarray:
        bonus = np.zeros(self.num_entities)
        train, facts = self.train, self.facts
        rec = self.stats.recurrence.get(q.r)
        if rec is not None:
            rows = self._subject_rows(q.s)
            rows = rows[(train[rows, 1] == q.r) & (facts[rows] != exclude_fact)]
            np.add.at(bonus, train[rows, 2], gaussian_kernel(np.abs(q.T.tb - train[rows, 3]), *rec))
        inv = self.inverse(q.r)
        keep = facts != exclude_fact
        for (r_a, r_b), (mu, sigma) in self.stats.pair.items():
            if r_a != inv:
                continue
            rows = np.flatnonzero(keep & (train[:, 1] == r_b))
            np.add.at(bonus, train[rows, 0], gaussian_kernel(q.T.tb - train[rows, 3], mu, sigma))
        return bonus

    def start_bonus(self, q: TimeQuery, exclude_fact: int = -1) -> np.ndarray:
        years = self.vocab.years.astype(np.float64)
        bonus = np.zeros(len(years))
        rows = self._subject_rows(q.s)
        rows = rows[self.facts[rows] != exclude_fact]
        for i in rows:
            r2, tb = int(self.train[i, 1]), int(self.train[i, 3])
            if r2 == q.r and q.r in self.stats.recurrence:
                bonus += gaussian_kernel(np.abs(years - tb), *self.stats.recurrence[q.r])
            pair = self.stats.pair.get((q.r, r2))
            if pair is not None:
                bonus += gaussian_kernel(years - tb, *pair)
        return bonus


def apply_gadgets(table: ScoreTable, q, gadgets: Gadgets, exclude_fact: int = -1) -> ScoreTable:
    """Add ``eta`` times the gadget bonus; for time queries pass the start-year table."""
    eta = gadgets.stats.eta
    if eta == 0:
        return table
    if isinstance(q, LinkQuery):
        bonus = gadgets.link_bonus(q, exclude_fact)
    else:
        bonus = gadgets.start_bonus(q, exclude_fact)
    return ScoreTable(table.scores + eta * bonus, table.contributions)


def predict_interval(P_b: np.ndarray, P_e: np.ndarray, vocab: TimeVocab) -> TimeInterval | None:
    """Best ``[t_b, t_e]`` with ``t_b <= t_e`` under ``P_b(t_b) + P_e(t_e)``.

    Ties go to the earliest start, then the earliest end. Returns None for
    all-zero tables so the caller can fall back.
    """
    P_b = np.asarray(P_b, dtype=np.float64)
    P_e = np.asarray(P_e, dtype=np.float64)
    if not P_b.any() and not P_e.any():
        return None
    best_b = np.zeros(len(P_b), np.int64)
    cur = 0
    for j in range(1, len(P_b)):
        if P_b[j] > P_b[cur]:
            cur = j
        best_b[j] = cur
    vals = P_b[best_b] + P_e
    top = vals.max()
    ties = np.flatnonzero(vals == top)
    b, e = min((int(best_b[j]), int(j)) for j in ties)
    return TimeInterval(vocab.year(b), vocab.year(e))


def fallback_interval(r: int, means: RelationMeans, vocab: TimeVocab) -> TimeInterval:
    """Interval at the relation's mean start id and mean start + offset id."""
    mean_start, mean_offset = means.get(r)
    last = len(vocab) - 1
    b = min(max(int(np.floor(mean_start + 0.5)), 0), last)
    e = min(max(int(np.floor(mean_start + mean_offset + 0.5)), b), last)
    return TimeInterval(vocab.year(b), vocab.year(e))


# ---------------------------------------------------------------------------
# Explanations


@dataclass
class Explanation:
    rule: TemporalRule
    rule_index: int
    contribution: float
    grounding: dict[str, object]

    def render(self, dataset: TkgDataset) -> str:
        return render_rule(self.rule, dataset.relations) + "\n" + render_grounding(self.grounding)


def render_rule(rule: TemporalRule, relations: list[str]) -> str:
    """Variable form, e.g. ``r(E1,E2,T1) <- During(T1,T2) ∧ s(E1,E3,T2) ∧ ...``."""
    m = rule.length
    ents = ["E1"] + [f"E{i + 3}" for i in range(m - 1)] + ["E2"]
    atoms = []
    for i, (a, r) in enumerate(rule.body):
        atoms.append(f"{AllenRelation(a).title}(T{i + 1},T{i + 2})")
        atoms.append(f"{relations[r]}({ents[i]},{ents[i + 1]},T{i + 2})")
    return f"{relations[rule.head]}(E1,E2,T1) <- " + " ∧ ".join(atoms)


def render_grounding(grounding: dict[str, object]) -> str:
    parts = []
    for key, val in grounding.items():
        if isinstance(val, tuple):
            val = f"[{val[0]}, {val[1]}]"
        parts.append(f"{key}: {val}")
    return ", ".join(parts)


def _grounding_dict(dataset: TkgDataset, graph: WalkGraph, src: int, path, T1=None) -> dict[str, object]:
    m = len(path)
    names = ["E2"] if m == 1 else [f"E{i + 3}" for i in range(m - 1)] + ["E2"]
    g: dict[str, object] = {"E1": dataset.entities[src]}
    ents = [dataset.entities[int(graph.nbr[i])] for i in path]
    for name, ent in sorted(zip(names, ents), key=lambda kv: int(kv[0][1:])):
        g[name] = ent
    if T1 is not None:
        g["T1"] = (int(T1[0]), int(T1[1]))
    for i, edge in enumerate(path):
        g[f"T{i + 2}"] = (int(graph.tb[edge]), int(graph.te[edge]))
    return g


def explain(q, answer, table: ScoreTable, ruleset: RuleSet, dataset: TkgDataset, graph: WalkGraph,
            vocab: TimeVocab | None = None, which: str = "start", exclude_fact: int = -1) -> list[Explanation]:
    """Rules behind ``answer`` ranked by contribution, each with one concrete grounding.

    For a link query ``answer`` is an entity id and ``table`` its score
    table; for a time query ``answer`` is a year and ``table`` the start or
    end table that year was read from.
    """
    if isinstance(q, LinkQuery):
        key = int(answer)
    else:
        key = vocab.id(answer)
    items = sorted(table.contributions.get(key, []), key=lambda kv: (-kv[1], kv[0]))
    out = []
    for gi, amount in items:
        rule = ruleset.rules[gi]
        if isinstance(q, LinkQuery):
            paths = _body_paths(graph, rule, q.s, q.T, True, exclude_fact, int(answer))
            g = _grounding_dict(dataset, graph, q.s, paths[0], q.T) if len(paths) else {}
        else:
            paths = _body_paths(graph, rule, q.s, None, False, exclude_fact, q.o)
            bounds = start_id_bounds if which == "start" else end_id_bounds
            a1 = rule.allens[0]
            hit = None
            for p in paths:
                lo, hi = bounds(a1, vocab.id(graph.tb[p[0]]), vocab.id(graph.te[p[0]]), len(vocab))
                if lo <= key < hi:
                    hit = p
                    break
            g = _grounding_dict(dataset, graph, q.s, hit) if hit is not None else {}
        out.append(Explanation(rule, int(gi), amount, g))
    return out
