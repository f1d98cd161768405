import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tkgrule import train as train_mod
from tkgrule.core import TimeInterval, build_time_vocab
from tkgrule.mining import mine_ruleset
from tkgrule.model import TkgModel, TrainConfig
from tkgrule.predict import LinkQuery, TimeQuery, fallback_interval
from tkgrule.synthetic import planted_dataset
from tkgrule.train import (
    Adam,
    CosineSchedule,
    GoldSets,
    LinkEvaluator,
    TimeEvaluator,
    TrainingError,
    loss_link,
    loss_time,
    softmax_backward,
    train,
)
from tkgrule.scorer import init_params

from conftest import build_dataset
from gradcheck import check_pipeline, entrywise_error


def fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# -- losses -----------------------------------------------------------------

def test_link_loss_examples():
    assert loss_link(np.array([0.25, 0.75]), GoldSets(objects=frozenset({0}))) == pytest.approx(1.25)
    assert loss_link(np.array([1.0, 0.0, 0.0]), GoldSets(objects=frozenset({0}))) == 0.0
    assert loss_link(np.array([0.2, 0.3, 0.5]), GoldSets(objects=frozenset({0, 1, 2}))) == 0.0


def test_link_loss_two_golds():
    P = np.array([0.1, 0.2, 0.3, 0.4])
    gold = GoldSets(objects=frozenset({0, 2}))
    # false mass 0.6; gold 0 is beaten by 1 and 3; gold 2 only by 3
    want = 0.6 + ((0.2 - 0.1) + (0.4 - 0.1)) / 2 + (0.4 - 0.3)
    assert loss_link(P, gold) == pytest.approx(want)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_link_loss_drops_when_mass_moves_to_gold(p, delta):
    q = min(p + delta * (1 - p), 1.0)
    gold = GoldSets(objects=frozenset({0}))
    assert loss_link(np.array([q, 1 - q]), gold) <= loss_link(np.array([p, 1 - p]), gold) + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_link_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(6))
    gold = GoldSets(objects=frozenset(rng.choice(6, size=2, replace=False).tolist()))
    _, dP = loss_link(P, gold, grad=True)
    np.testing.assert_allclose(dP, fd(lambda x: loss_link(x, gold), P), atol=1e-7)


def test_time_loss_examples():
    gold = GoldSets(starts=frozenset({1}), ends=frozenset({2}))
    P_b = np.array([0.5, 0.3, 0.2])
    P_e = np.array([0.1, 0.2, 0.7])
    start = (0.5 - 0.3) * 1 / 2 + (0.2 - 0.3) * 1 / 2
    end = (0.1 - 0.7) * 2 / 2 + (0.2 - 0.7) * 1 / 2
    assert loss_time(P_b, P_e, gold, 2) == pytest.approx(start + end)
    assert start + end == pytest.approx(-0.8)
    assert loss_time(np.full(3, 1 / 3), np.full(3, 1 / 3), gold, 2) == pytest.approx(0.0)
    point = loss_time(np.eye(3)[1], np.eye(3)[2], gold, 2)
    assert point < 0
    assert point == pytest.approx(-(1 / 2 + 1 / 2) - (2 / 2 + 1 / 2))


def test_time_loss_uses_vocab_distance():
    from tkgrule.core import TimeVocab

    vocab = TimeVocab([1900, 1950, 2000, 2001])
    gold = GoldSets(starts=frozenset({0}), ends=frozenset({0}))
    P = np.array([0.1, 0.2, 0.3, 0.4])
    assert loss_time(P, P, gold, vocab) == loss_time(P, P, gold, 3)


@pytest.mark.parametrize("seed", range(5))
def test_time_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    P_b, P_e = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    gold = GoldSets(starts=frozenset({1, 3}), ends=frozenset({4}))
    _, db, de = loss_time(P_b, P_e, gold, 4, grad=True)
    np.testing.assert_allclose(db, fd(lambda x: loss_time(x, P_e, gold, 4), P_b), atol=1e-8)
    np.testing.assert_allclose(de, fd(lambda x: loss_time(P_b, x, gold, 4), P_e), atol=1e-8)


def test_softmax_backward():
    rng = np.random.default_rng(0)
    z, w = rng.normal(size=5), rng.normal(size=5)

    def f(x):
        p = np.exp(x - x.max())
        return float(w @ (p / p.sum()))

    p = np.exp(z - z.max())
    p /= p.sum()
    np.testing.assert_allclose(softmax_backward(p, w), fd(f, z), atol=1e-8)


# -- optimizer and schedule ---------------------------------------------------

def test_cosine_schedule_endpoints():
    sched = CosineSchedule(1e-3, 5000)
    assert sched(0) == 1e-3
    assert sched(4999) == pytest.approx(2e-4)
    assert sched(2499.5) == pytest.approx(6e-4)
    assert CosineSchedule(1e-3, 1)(0) == 1e-3


@settings(max_examples=50)
@given(st.floats(1e-5, 1.0), st.integers(1, 6000))
def test_cosine_schedule_bounds(lr, total):
    sched = CosineSchedule(lr, total)
    values = [sched(s) for s in range(0, total, max(total // 97, 1))]
    assert min(values) >= lr / 5 * (1 - 1e-12)
    assert max(values) <= lr
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_adam_first_step_moves_by_lr():
    p = init_params(2, 3, seed=0)
    g = p.copy()
    for arr in g.arrays().values():
        arr[...] = 0.5
    before = {k: v.copy() for k, v in p.arrays().items()}
    Adam(p).step(p, g, 0.01)
    for k, v in p.arrays().items():
        np.testing.assert_allclose(before[k] - v, 0.01, rtol=1e-6)


# -- full pipeline gradients ---------------------------------------------------

@pytest.mark.parametrize("seed, task", [(0, "link"), (1, "time"), (2, "link"), (3, "time")])
def test_pipeline_gradient(seed, task):
    assert check_pipeline(seed, task) < 1e-4


@pytest.mark.parametrize("task", ["link", "time"])
def test_pipeline_gradient_standard_gru(task):
    assert check_pipeline(7, task, standard_gru=True) < 1e-4


def test_pipeline_gradient_entrywise_small_step():
    assert check_pipeline(5, "time", h=1e-5, measure=entrywise_error) < 1e-4


# -- training loop ---------------------------------------------------------------

@pytest.fixture(scope="module")
def small_planted():
    ds = planted_dataset(num_entities=30, num_pairs=20, seed=3)
    return ds, mine_ruleset(ds, max_len=1)


def test_training_is_deterministic(small_planted):
    ds, rules = small_planted
    cfg = TrainConfig(epochs=4, dim=8, seed=5)
    a, b = train(cfg, ds, rules), train(cfg, ds, rules)
    assert a.history == b.history
    for k, v in a.model.params.arrays().items():
        np.testing.assert_array_equal(v, b.model.params.arrays()[k])


@pytest.mark.parametrize("task", ["link", "time"])
def test_training_reduces_loss(small_planted, task):
    ds, rules = small_planted
    res = train(TrainConfig(task=task, epochs=15, dim=8, lr=1e-2, eval_every=5), ds, rules)
    assert res.history[-1]["loss"] < res.history[0]["loss"]
    metric = "MRR" if task == "link" else "aeIOU"
    evaluated = [h for h in res.history if metric in h]
    assert [h["epoch"] for h in evaluated] == [5, 10, 15]
    assert res.best_metric == max(h[metric] for h in evaluated)


def test_lr_follows_schedule(small_planted):
    ds, rules = small_planted
    res = train(TrainConfig(epochs=5, dim=4, lr=1e-3), ds, rules)
    sched = CosineSchedule(1e-3, 5)
    assert [h["lr"] for h in res.history] == [sched(i) for i in range(5)]


def test_nan_loss_aborts(small_planted, monkeypatch):
    ds, rules = small_planted
    monkeypatch.setattr(train_mod, "link_step", lambda *a, **k: (math.nan, None))
    with pytest.raises(TrainingError, match="non-finite loss"):
        train(TrainConfig(epochs=1, dim=4), ds, rules)


def test_best_parameters_restored(small_planted):
    ds, rules = small_planted
    res = train(TrainConfig(epochs=6, dim=8, lr=5e-2, eval_every=1), ds, rules)
    assert LinkEvaluator(res.model, "valid")()["MRR"] == pytest.approx(res.best_metric)


# -- evaluation ---------------------------------------------------------------------

def _eval_toy():
    train_rows = [
        ("a", "r", "b", 2000, 2005), ("b", "p", "a", 2000, 2005),
        ("a", "r", "c", 2003, 2004), ("c", "p", "a", 2003, 2004),
        ("a", "r", "d", 1990, 1991), ("d", "p", "a", 1990, 1991),
    ]
    test_rows = [("a", "r", "e", 2001, 2002), ("e", "p", "a", 2001, 2002), ("x", "r", "b", 1995, 1995)]
    return build_dataset(train_rows, test=test_rows)


def test_time_aware_filter_toy():
    ds = _eval_toy()
    rules = mine_ruleset(ds, max_len=1)
    model = TkgModel.fresh(ds, rules, TrainConfig(dim=4, seed=1))
    ev = LinkEvaluator(model, "test")
    a, r = ds.entity_id("a"), ds.relation_id("r")
    first = ev.items[0]
    assert first[0] == LinkQuery(a, r, TimeInterval(2001, 2002))
    # b [2000,2005] overlaps; c [2003,2004] and d [1990,1991] do not
    assert first[2] == [ds.entity_id("b")]
    ranks = ev.ranks()
    for (q, gold, filt, g, _), rank in zip(ev.items, ranks):
        scores = model.link_table(q, g).scores
        keep = [i for i in range(len(scores)) if i == gold or i not in filt]
        higher = sum(scores[i] > scores[gold] for i in keep)
        ties = sum(scores[i] == scores[gold] for i in keep) - 1
        assert rank == 1 + higher + ties / 2
    assert len(ranks) == 2 * ds.num_facts("test")


def test_test_facts_never_scored():
    ds = _eval_toy()
    masked = dataclasses.replace(ds, splits={"train": ds.splits["train"]})
    vocab = build_time_vocab(ds)
    rules = mine_ruleset(ds, max_len=1)
    cfg = TrainConfig(dim=4, seed=2, eta=0.5)
    params = init_params(ds.num_relations, 4, seed=2)
    full = TkgModel(ds, rules, params, cfg, vocab=vocab)
    bare = TkgModel(masked, rules, params, cfg, vocab=vocab)
    assert bare.dataset.num_facts("test") == 0
    for s, r, o, b, e in ds.splits["test"].tolist():
        q = LinkQuery(s, r, TimeInterval(b, e))
        np.testing.assert_array_equal(full.link_table(q).scores, bare.link_table(q).scores)
        tq = TimeQuery(s, r, o)
        assert full.answer_time(tq)[0] == bare.answer_time(tq)[0]
        for x, y in zip(full.time_tables(tq), bare.time_tables(tq)):
            np.testing.assert_array_equal(x.scores, y.scores)


def test_unseen_subject_falls_back():
    ds = _eval_toy()
    rules = mine_ruleset(ds, max_len=1)
    model = TkgModel.fresh(ds, rules, TrainConfig(task="time", dim=4))
    x, b, r = ds.entity_id("x"), ds.entity_id("b"), ds.relation_id("r")
    interval, _, _, used = model.answer_time(TimeQuery(x, r, b))
    assert used
    assert interval == fallback_interval(r, model.means, model.vocab)
    preds = list(TimeEvaluator(model, "test").predictions())
    unseen = [p for p in preds if p[0].s == x]
    assert unseen and all(p[3] for p in unseen)
