"""Losses, optimizer, learning-rate schedule, training loop and evaluation."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import TimeInterval, TimeVocab, TkgDataset
from .metrics import best_aeiou, filtered_rank, ranking_metrics
from .mining import END, OBJECT, START, RuleSet
from .model import TkgModel, TrainConfig
from .predict import LinkQuery, TimeQuery, softmax_probs
from .scorer import ModelParams, backward, rule_scores

logger = logging.getLogger(__name__)


class TrainingError(Exception):
    pass


@dataclass
class GoldSets:
    """True answers of one query: entity ids, or start/end vocabulary ids."""

    objects: frozenset = frozenset()
    starts: frozenset = frozenset()
    ends: frozenset = frozenset()


# ---------------------------------------------------------------------------
# Losses


def loss_link(P: np.ndarray, gold: GoldSets, grad: bool = False):
    """False-object mass plus, per gold object, the mean margin of the false
    objects ranked above it. With ``grad`` returns ``(loss, dloss/dP)``."""
    P = np.asarray(P, dtype=np.float64)
    is_gold = np.zeros(len(P), dtype=bool)
    is_gold[list(gold.objects)] = True
    false = ~is_gold
    loss = float(P[false].sum())
    dP = false.astype(np.float64)
    for o in gold.objects:
        above = false & (P > P[o])
        k = int(above.sum())
        if k == 0:
            continue
        loss += float((P[above] - P[o]).sum()) / k
        dP[above] += 1.0 / k
        dP[o] -= 1.0
    return (loss, dP) if grad else loss


def _time_term(P: np.ndarray, gold_ids, max_diff: int):
    n = len(P)
    gold = np.array(sorted(gold_ids), dtype=np.int64)
    false = np.ones(n, dtype=bool)
    false[gold] = False
    f = np.flatnonzero(false)
    dist = np.abs(f[None, :] - gold[:, None]) / max_diff
    loss = float(((P[f][None, :] - P[gold][:, None]) * dist).sum())
    dP = np.zeros(n)
    dP[f] += dist.sum(axis=0)
    dP[gold] -= dist.sum(axis=1)
    return loss, dP


def loss_time(P_b: np.ndarray, P_e: np.ndarray, gold: GoldSets, vocab: TimeVocab | int, grad: bool = False):
    """Distance-weighted margin between false and true start (and end) years.

    ``gold.starts``/``gold.ends`` hold vocabulary ids; distances are id
    differences over the largest id difference.
    """
    max_diff = vocab if isinstance(vocab, int) else vocab.max_id_diff
    lb, db = _time_term(np.asarray(P_b, np.float64), gold.starts, max_diff)
    le, de = _time_term(np.asarray(P_e, np.float64), gold.ends, max_diff)
    return (lb + le, db, de) if grad else lb + le


def softmax_backward(P: np.ndarray, dP: np.ndarray) -> np.ndarray:
    return P * (dP - float(dP @ P))


# ---------------------------------------------------------------------------
# Optimizer and schedule


class CosineSchedule:
    """One cosine cycle from ``lr`` down to ``floor * lr`` over ``total`` steps."""

    def __init__(self, lr: float, total: int, floor: float = 0.2):
        self.lr = lr
        self.total = max(int(total), 1)
        self.min_lr = lr * floor

    def __call__(self, step: int) -> float:
        if self.total == 1:
            return self.lr
        frac = min(max(step, 0), self.total - 1) / (self.total - 1)
        lr = self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + math.cos(math.pi * frac))
        # rounding can overshoot either end by an ulp
        return min(max(lr, self.min_lr), self.lr)


class Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.t = 0

    def step(self, params: ModelParams, grads: ModelParams, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.arrays().items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p = getattr(params, name)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# Per-query forward/backward


def link_step(model: TkgModel, q: LinkQuery, grounding, gold: GoldSets, bonus=None):
    """Loss and parameter gradients of one link query."""
    params = model.params
    psi, tape = rule_scores(params, model.ruleset, grounding.rule_idx, q.r, (OBJECT,))
    scores = grounding.aggregate(psi[OBJECT])
    if bonus is not None:
        scores = scores + bonus
    P = softmax_probs(scores)
    loss, dP = loss_link(P, gold, grad=True)
    dpsi = grounding.rule_gradient(softmax_backward(P, dP))
    return loss, backward(params, tape, {OBJECT: dpsi})


def time_step(model: TkgModel, q: TimeQuery, groundings, gold: GoldSets, bonus=None):
    params = model.params
    gb, ge = groundings
    union = np.union1d(gb.rule_idx, ge.rule_idx)
    psi, tape = rule_scores(params, model.ruleset, union, q.r, (START, END))
    pos_b = np.searchsorted(union, gb.rule_idx)
    pos_e = np.searchsorted(union, ge.rule_idx)
    s_b = gb.aggregate(psi[START][pos_b]) if not gb.empty else np.zeros(len(model.vocab))
    s_e = ge.aggregate(psi[END][pos_e]) if not ge.empty else np.zeros(len(model.vocab))
    if bonus is not None:
        s_b = s_b + bonus
    P_b, P_e = softmax_probs(s_b), softmax_probs(s_e)
    loss, dP_b, dP_e = loss_time(P_b, P_e, gold, model.vocab, grad=True)
    d_b = np.zeros(len(union))
    d_e = np.zeros(len(union))
    if not gb.empty:
        np.add.at(d_b, pos_b, gb.rule_gradient(softmax_backward(P_b, dP_b)))
    if not ge.empty:
        np.add.at(d_e, pos_e, ge.rule_gradient(softmax_backward(P_e, dP_e)))
    return loss, backward(params, tape, {START: d_b, END: d_e})


# ---------------------------------------------------------------------------
# Query construction


@dataclass
class _Query:
    query: object
    fact: int
    gold: GoldSets
    grounding: object
    bonus: np.ndarray | None = None


def link_training_queries(model: TkgModel, gadgets: bool = False) -> list[_Query]:
    ds = model.dataset
    train = ds.splits["train"]
    n = len(train) // 2
    golds = defaultdict(set)
    for s, r, o, b, e in train.tolist():
        golds[(s, r, b, e)].add(o)
    out = []
    for i, (s, r, o, b, e) in enumerate(train.tolist()):
        q = LinkQuery(s, r, TimeInterval(b, e))
        g = model.ground_link(q, i % n)
        if g.empty:
            continue
        bonus = None
        if gadgets and model.gadget_stats.eta:
            bonus = model.gadget_stats.eta * model.gadgets.link_bonus(q, i % n)
        out.append(_Query(q, i % n, GoldSets(objects=frozenset(golds[(s, r, b, e)])), g, bonus))
    return out


def time_training_queries(model: TkgModel, gadgets: bool = False) -> list[_Query]:
    ds, vocab = model.dataset, model.vocab
    train = ds.splits["train"]
    n = len(train) // 2
    golds = defaultdict(list)
    for s, r, o, b, e in train[:n].tolist():
        golds[(s, r, o)].append((b, e))
    out = []
    for i, (s, r, o, b, e) in enumerate(train[:n].tolist()):
        q = TimeQuery(s, r, o)
        g = model.ground_time(q, i)
        if g[0].empty and g[1].empty:
            continue
        ivs = golds[(s, r, o)]
        gold = GoldSets(starts=frozenset(vocab.id(x) for x, _ in ivs), ends=frozenset(vocab.id(y) for _, y in ivs))
        bonus = None
        if gadgets and model.gadget_stats.eta:
            bonus = model.gadget_stats.eta * model.gadgets.start_bonus(q, i)
        out.append(_Query(q, i, gold, g, bonus))
    return out


# ---------------------------------------------------------------------------
# Evaluation


class LinkEvaluator:
    """Time-aware filtered ranking over one split, with groundings cached."""

    def __init__(self, model: TkgModel, split: str = "test"):
        self.model = model
        ds = model.dataset
        known = defaultdict(list)
        for arr in ds.splits.values():
            for s, r, o, b, e in arr.tolist():
                known[(s, r)].append((o, b, e))
        arr = ds.splits[split]
        n = len(arr) // 2
        self.items = []
        for i, (s, r, o, b, e) in enumerate(arr.tolist()):
            q = LinkQuery(s, r, TimeInterval(b, e))
            filt = {x for x, xb, xe in known[(s, r)] if x != o and xb <= e and b <= xe}
            exclude = i % n if split == "train" else -1
            self.items.append((q, o, sorted(filt), model.ground_link(q, exclude), exclude))

    def ranks(self) -> list[float]:
        out = []
        for q, gold, filt, g, exclude in self.items:
            table = self.model.link_table(q, g, exclude_fact=exclude)
            out.append(filtered_rank(table.scores, gold, filt))
        return out

    def __call__(self) -> dict[str, float]:
        return ranking_metrics(self.ranks())


class TimeEvaluator:
    def __init__(self, model: TkgModel, split: str = "test"):
        self.model = model
        arr = model.dataset.splits[split]
        n = len(arr) // 2
        golds = defaultdict(list)
        for s, r, o, b, e in arr[:n].tolist():
            golds[(s, r, o)].append((b, e))
        self.items = []
        for i, (s, r, o, b, e) in enumerate(arr[:n].tolist()):
            q = TimeQuery(s, r, o)
            exclude = i if split == "train" else -1
            self.items.append((q, golds[(s, r, o)], model.ground_time(q, exclude), exclude))

    def predictions(self):
        for q, golds, g, exclude in self.items:
            interval, _, _, fallback = self.model.answer_time(q, g, exclude)
            yield q, golds, interval, fallback

    def __call__(self) -> dict[str, float]:
        scores = [best_aeiou(golds, iv) for _, golds, iv, _ in self.predictions()]
        return {"aeIOU": float(np.mean(scores)) if scores else 0.0}


def eval_link(model: TkgModel, split: str = "test") -> dict[str, float]:
    return LinkEvaluator(model, split)()


def eval_time(model: TkgModel, split: str = "test") -> dict[str, float]:
    return TimeEvaluator(model, split)()


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    model: TkgModel
    best_epoch: int
    best_metric: float
    history: list[dict] = field(default_factory=list)


def train(config: TrainConfig, dataset: TkgDataset, ruleset: RuleSet, model: TkgModel | None = None,
          callback=None) -> TrainResult:
    """Adam with one cosine cycle per run; keeps the parameters of the best validation epoch.

    The learning rate is updated once per epoch. Validation runs every
    ``config.eval_every`` epochs and on the last epoch (MRR for link, aeIOU
    for time). Without a validation split the final parameters are kept.
    """
    model = model if model is not None else TkgModel.fresh(dataset, ruleset, config)
    rng = np.random.default_rng(config.seed)
    if config.task == "link":
        queries = link_training_queries(model, config.gadgets_in_training)
        step_fn = link_step
        has_valid = dataset.num_facts("valid") > 0
        evaluator = LinkEvaluator(model, "valid") if has_valid else None
        metric_name = "MRR"
    else:
        queries = time_training_queries(model, config.gadgets_in_training)
        step_fn = time_step
        has_valid = dataset.num_facts("valid") > 0
        evaluator = TimeEvaluator(model, "valid") if has_valid else None
        metric_name = "aeIOU"
    logger.info("training %s on %d queries", config.task, len(queries))
    schedule = CosineSchedule(config.lr, config.epochs, config.lr_floor)
    adam = Adam(model.params)
    best = (-1.0, -1, model.params.copy())
    history = []
    for epoch in range(config.epochs):
        lr = schedule(epoch)
        total = 0.0
        for qi in rng.permutation(len(queries)):
            item = queries[qi]
            loss, grads = step_fn(model, item.query, item.grounding, item.gold, item.bonus)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch} on query {item.query}")
            adam.step(model.params, grads, lr)
            total += loss
        record = {"epoch": epoch + 1, "lr": lr, "loss": total / max(len(queries), 1)}
        if evaluator is not None and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            metric = evaluator()[metric_name]
            record[metric_name] = metric
            if metric > best[0]:
                best = (metric, epoch + 1, model.params.copy())
        history.append(record)
        if callback is not None:
            callback(record)
    if evaluator is not None:
        model.params = best[2]
        return TrainResult(model, best[1], best[0], history)
    return TrainResult(model, config.epochs, float("nan"), history)
