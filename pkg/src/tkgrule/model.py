"""A trained (or freshly initialized) model bundled with the data it scores against."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import TkgDataset, WalkGraph, build_time_vocab, build_walk_graph
from .mining import RuleSet
from .predict import (
    Gadgets,
    LinkQuery,
    TimeQuery,
    apply_gadgets,
    explain,
    fallback_interval,
    ground_link_query,
    ground_time_query,
    predict_interval,
    score_link,
    score_time,
    softmax_probs,
)
from .scorer import _ARRAYS, ModelParams, init_params
from .stats import (
    GadgetStats,
    PairStats,
    RelationMeans,
    fit_gadget_stats,
    fit_pair_stats,
    fit_relation_means,
)

CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class TrainConfig:
    task: str = "link"
    epochs: int = 5000
    lr: float = 1e-3
    lr_floor: float = 0.2
    eta: float = 0.0
    max_len: int = 3
    dim: int = 32
    seed: int = 0
    standard_gru: bool = False
    gadgets_in_training: bool = False
    eval_every: int = 1

    def __post_init__(self):
        if self.task not in ("link", "time"):
            raise ValueError(f"task must be 'link' or 'time', got {self.task!r}")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0 < self.lr_floor <= 1:
            raise ValueError("lr_floor must lie in (0, 1]")


class TkgModel:
    def __init__(self, dataset: TkgDataset, ruleset: RuleSet, params: ModelParams,
                 config: TrainConfig | None = None, pair_stats: PairStats | None = None,
                 gadget_stats: GadgetStats | None = None, means: RelationMeans | None = None,
                 graph: WalkGraph | None = None, vocab=None):
        self.dataset = dataset
        self.ruleset = ruleset
        self.params = params
        self.config = config or TrainConfig()
        self.vocab = vocab if vocab is not None else build_time_vocab(dataset)
        self.graph = graph if graph is not None else build_walk_graph(dataset)
        self.pair_stats = pair_stats if pair_stats is not None else fit_pair_stats(dataset)
        self.gadget_stats = gadget_stats if gadget_stats is not None else fit_gadget_stats(dataset, self.config.eta)
        self.means = means if means is not None else fit_relation_means(dataset, self.vocab)
        self.gadgets = Gadgets(self.gadget_stats, dataset, self.vocab)

    @classmethod
    def fresh(cls, dataset: TkgDataset, ruleset: RuleSet, config: TrainConfig) -> "TkgModel":
        params = init_params(dataset.num_relations, config.dim, config.seed, config.standard_gru)
        return cls(dataset, ruleset, params, config)

    # -- link ---------------------------------------------------------------
    def ground_link(self, q: LinkQuery, exclude_fact: int = -1):
        return ground_link_query(self.graph, self.ruleset, q, self.dataset.num_entities, exclude_fact)

    def link_table(self, q: LinkQuery, grounding=None, gadgets: bool = True, exclude_fact: int = -1):
        if grounding is None:
            grounding = self.ground_link(q, exclude_fact)
        table = score_link(q, self.ruleset, self.params, self.graph, self.dataset.num_entities, grounding)
        if gadgets:
            table = apply_gadgets(table, q, self.gadgets, exclude_fact)
        return table

    def answer_link(self, q: LinkQuery, k: int = 10) -> list[tuple[int, float]]:
        P = softmax_probs(self.link_table(q))
        top = np.lexsort((np.arange(len(P)), -P))[:k]
        return [(int(i), float(P[i])) for i in top]

    # -- time ---------------------------------------------------------------
    def ground_time(self, q: TimeQuery, exclude_fact: int = -1):
        return ground_time_query(self.graph, self.ruleset, q, self.pair_stats, self.vocab, exclude_fact)

    def time_tables(self, q: TimeQuery, groundings=None, gadgets: bool = True, exclude_fact: int = -1):
        if groundings is None:
            groundings = self.ground_time(q, exclude_fact)
        start, end = score_time(q, self.ruleset, self.params, self.graph, self.pair_stats, self.vocab, groundings)
        if gadgets:
            start = apply_gadgets(start, q, self.gadgets, exclude_fact)
        return start, end

    def answer_time(self, q: TimeQuery, groundings=None, exclude_fact: int = -1):
        """Predicted interval, its start/end probability tables, and whether the fallback was used."""
        if groundings is None:
            groundings = self.ground_time(q, exclude_fact)
        if groundings[0].empty and groundings[1].empty:
            return fallback_interval(q.r, self.means, self.vocab), None, None, True
        start, end = self.time_tables(q, groundings, exclude_fact=exclude_fact)
        P_b, P_e = softmax_probs(start), softmax_probs(end)
        interval = predict_interval(P_b, P_e, self.vocab)
        if interval is None:
            return fallback_interval(q.r, self.means, self.vocab), P_b, P_e, True
        return interval, P_b, P_e, False

    # -- explanations -------------------------------------------------------
    def explain_link(self, q: LinkQuery, answer: int, exclude_fact: int = -1):
        table = self.link_table(q, gadgets=False, exclude_fact=exclude_fact)
        return explain(q, answer, table, self.ruleset, self.dataset, self.graph, exclude_fact=exclude_fact)

    def explain_time(self, q: TimeQuery, year: int, which: str = "start", exclude_fact: int = -1):
        start, end = self.time_tables(q, gadgets=False, exclude_fact=exclude_fact)
        table = start if which == "start" else end
        return explain(q, year, table, self.ruleset, self.dataset, self.graph, self.vocab, which, exclude_fact)

    # -- persistence --------------------------------------------------------
    def save(self, path, extra: dict | None = None) -> None:
        relations = self.dataset.relations
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "standard_gru": self.params.standard_gru,
            "num_relations": self.dataset.num_relations,
            "num_entities": self.dataset.num_entities,
            "ruleset_sha256": self.ruleset.digest(relations),
            "pair_stats": {
                "params": [[k[0], k[1], *v] for k, v in sorted(self.pair_stats.params.items())],
                "counts": [[k[0], k[1], c] for k, c in sorted(self.pair_stats.counts.items())],
                "default": list(self.pair_stats.default),
            },
            "gadget_stats": {
                "recurrence": [[r, *v] for r, v in sorted(self.gadget_stats.recurrence.items())],
                "pair": [[k[0], k[1], *v] for k, v in sorted(self.gadget_stats.pair.items())],
                "eta": self.gadget_stats.eta,
            },
            "relation_means": {
                "means": [[r, *v] for r, v in sorted(self.means.means.items())],
                "global": list(self.means.global_mean),
            },
            "extra": extra or {},
        }
        arrays = {f"param_{k}": v for k, v in self.params.arrays().items()}
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), vocab=self.vocab.years, **arrays)


def read_checkpoint_meta(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"missing checkpoint {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            return json.loads(str(z["meta"]))
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None


def load_model(path, dataset: TkgDataset, ruleset: RuleSet) -> TkgModel:
    """Rebuild a model from a checkpoint; the rule set must match the one trained with."""
    meta = read_checkpoint_meta(path)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {meta.get('version')} not supported")
    if meta["ruleset_sha256"] != ruleset.digest(dataset.relations):
        raise CheckpointError("rule set does not match the checkpoint (sha256 differs)")
    if meta["num_relations"] != dataset.num_relations or meta["num_entities"] != dataset.num_entities:
        raise CheckpointError("dataset does not match the checkpoint schema")
    try:
        with np.load(path, allow_pickle=False) as z:
            params = ModelParams(**{k: z[f"param_{k}"] for k in _ARRAYS}, standard_gru=meta["standard_gru"])
            vocab_years = z["vocab"]
        config = TrainConfig(**meta["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint schema mismatch: {exc}") from None
    vocab = build_time_vocab(dataset)
    if not np.array_equal(vocab.years, vocab_years):
        raise CheckpointError("time vocabulary does not match the checkpoint")
    ps = meta["pair_stats"]
    pair_stats = PairStats(
        params={(int(a), int(b)): tuple(v) for a, b, *v in ps["params"]},
        counts={(int(a), int(b)): int(c) for a, b, c in ps["counts"]},
        default=tuple(ps["default"]),
    )
    gs = meta["gadget_stats"]
    gadget_stats = GadgetStats(
        recurrence={int(r): tuple(v) for r, *v in gs["recurrence"]},
        pair={(int(a), int(b)): tuple(v) for a, b, *v in gs["pair"]},
        eta=gs["eta"],
    )
    rm = meta["relation_means"]
    means = RelationMeans({int(r): tuple(v) for r, *v in rm["means"]}, tuple(rm["global"]))
    return TkgModel(dataset, ruleset, params, config, pair_stats, gadget_stats, means, vocab=vocab)
