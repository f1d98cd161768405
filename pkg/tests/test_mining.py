import numpy as np
import pytest

from tkgrule import _kernels_py, kernels
from tkgrule.allen import AllenRelation, classify
from tkgrule.core import Quadruple, build_time_vocab, build_walk_graph
from tkgrule.mining import (
    PcaContext,
    RuleSet,
    TemporalRule,
    find_fact,
    lift_to_rule,
    mine_ruleset,
    mine_walks,
    pca_score_link,
    pca_score_time,
)
from tkgrule.synthetic import planted_dataset

from conftest import build_dataset, random_toy
from oracles import edges_of, groundings_oracle, pca_link_oracle, pca_time_oracle, walks_oracle

A = AllenRelation


def head_of(ds, s, r, o, b, e):
    return Quadruple(ds.entity_id(s), ds.relation_id(r), ds.entity_id(o), b, e)


def test_birthplace_walk(birthplace):
    g = build_walk_graph(birthplace)
    head = head_of(birthplace, "David", "wBi", "London", 1975, 1975)
    walks = mine_walks(g, head, 2)
    names = [[(birthplace.relations[r], birthplace.entities[o]) for r, _, o, _ in w.steps] for w in walks]
    assert [("iMt", "Victoria"), ("wBi", "London")] in names
    assert all(len(w.steps) <= 2 for w in walks)


def test_birthplace_rule(birthplace):
    g = build_walk_graph(birthplace)
    head = head_of(birthplace, "David", "wBi", "London", 1975, 1975)
    walk = next(w for w in mine_walks(g, head, 2) if len(w.steps) == 2 and w.steps[1][2] == head.o
                and birthplace.relations[w.steps[0][0]] == "iMt")
    rule = lift_to_rule(head, walk)
    a4 = classify((1975, 1975), (1999, 2023))
    a5 = classify((1999, 2023), (1974, 1974))
    expected = TemporalRule(head.r, ((a4, birthplace.relation_id("iMt")), (a5, birthplace.relation_id("wBi"))))
    assert rule == expected
    assert rule.render(birthplace.relations) == "wBi <- before & iMt & after & wBi"
    assert expected in mine_ruleset(birthplace, max_len=3, with_pca=False)


def test_walks_exclude_head_and_twin(birthplace):
    g = build_walk_graph(birthplace)
    head = head_of(birthplace, "David", "wBi", "London", 1975, 1975)
    fid = find_fact(g, head)
    for w in mine_walks(g, head, 3):
        assert fid not in [f for _, _, _, f in w.steps]


def test_isolated_subject_has_no_walks():
    ds = build_dataset([("a", "r", "b", 2000, 2001), ("c", "r", "d", 2001, 2002)])
    g = build_walk_graph(ds)
    head = head_of(ds, "a", "r", "b", 2000, 2001)
    assert mine_walks(g, head, 3) == []


def test_triangle_walks_match_dfs():
    ds = build_dataset([("a", "p", "b", 2000, 2001), ("b", "q", "c", 2001, 2002), ("a", "h", "c", 2000, 2002)])
    g = build_walk_graph(ds)
    head = head_of(ds, "a", "h", "c", 2000, 2002)
    walks = mine_walks(g, head, 2)
    assert [[ds.relations[r] for r, _, _, _ in w.steps] for w in walks] == [["p", "q"]]
    oracle = walks_oracle(edges_of(ds.splits["train"]), head.s, head.o, 2, find_fact(g, head))
    assert len(oracle) == len(walks)


@pytest.mark.parametrize("seed", range(15))
def test_walks_match_brute_force(seed):
    ds = random_toy(seed)
    g = build_walk_graph(ds)
    edges = edges_of(ds.splits["train"])
    n = ds.num_facts("train")
    for i, row in enumerate(ds.splits["train"].tolist()):
        head = Quadruple(*row)
        got = sorted(tuple(f for _, _, _, f in w.steps) + tuple(o for _, _, o, _ in w.steps)
                     for w in mine_walks(g, head, 3, i % n))
        want = sorted(tuple(e[5] for e in p) + tuple(e[2] for e in p)
                      for p in walks_oracle(edges, head.s, head.o, 3, i % n))
        assert got == want


def test_symmetric_relation_lifts_to_equals(hanover):
    rules = mine_ruleset(hanover, max_len=1)
    married = hanover.relation_id("isMarriedTo")
    inv = hanover.inverse(married)
    assert TemporalRule(married, ((A.EQUALS, inv),)) in rules
    idx = rules.index(TemporalRule(married, ((A.EQUALS, inv),)))
    np.testing.assert_allclose(rules.pca[idx, 1:], [1.0, 1.0])


def test_identical_walks_dedup():
    ds = build_dataset([
        ("a", "p", "b", 2000, 2001), ("a", "h", "b", 2000, 2001),
        ("c", "p", "d", 1990, 1991), ("c", "h", "d", 1990, 1991),
    ])
    rules = mine_ruleset(ds, max_len=1)
    rule = TemporalRule(ds.relation_id("h"), ((A.EQUALS, ds.relation_id("p")),))
    assert rules.rules.count(rule) == 1
    assert rules.support[rules.index(rule)] == 2


def test_empty_train_gives_empty_ruleset():
    ds = build_dataset([], test=[("a", "r", "b", 2000, 2001)])
    assert len(mine_ruleset(ds)) == 0


def test_planted_support():
    ds = planted_dataset(num_entities=40, num_pairs=30, seed=1)
    rules = mine_ruleset(ds, max_len=1)
    rh, r1 = ds.relation_id("rel_h"), ds.relation_id("rel_1")
    rule = TemporalRule(rh, ((A.EQUALS, ds.inverse(r1)),))
    train = ds.splits["train"][: ds.num_facts("train")]
    pairs = {(s, o, b, e) for s, r, o, b, e in train.tolist() if r == rh}
    partners = {(o, s, b, e) for s, r, o, b, e in train.tolist() if r == r1}
    assert rules.support[rules.index(rule)] == len(pairs & partners)


def test_mining_is_deterministic(dahlem):
    a = mine_ruleset(dahlem).to_tsv(dahlem.relations)
    b = mine_ruleset(dahlem).to_tsv(dahlem.relations)
    assert a == b


@pytest.mark.parametrize("seed", range(5))
def test_every_rule_regrounds(seed):
    ds = random_toy(seed)
    edges = edges_of(ds.splits["train"])
    rules = mine_ruleset(ds, max_len=2)
    for rule, sup in zip(rules.rules, rules.support):
        assert sup >= 1
        heads = [e for e in edges if e[1] == rule.head]
        assert any(groundings_oracle(edges, rule, s, (b, e), o) for s, _, o, b, e, _ in heads)


def test_ruleset_round_trip(tmp_path, dahlem):
    rules = mine_ruleset(dahlem)
    path = tmp_path / "rules.tsv"
    rules.save(path, dahlem.relations)
    again = RuleSet.load(path, dahlem.relations)
    assert again.rules == rules.rules
    np.testing.assert_array_equal(again.support, rules.support)
    np.testing.assert_array_equal(again.pca, rules.pca)
    assert again.digest(dahlem.relations) == rules.digest(dahlem.relations)


def test_ruleset_rejects_duplicates_and_bad_files(dahlem):
    rule = TemporalRule(0, ((A.EQUALS, 1),))
    with pytest.raises(ValueError):
        RuleSet([rule, rule])
    with pytest.raises(ValueError):
        RuleSet.from_tsv("isMarriedTo\tequals nosuch\t1\t0\t0\t0\n", dahlem.relations)
    with pytest.raises(ValueError):
        RuleSet.from_tsv("isMarriedTo\tequals\t1\t0\t0\t0\n", dahlem.relations)


def test_rule_file_format(hanover):
    line = mine_ruleset(hanover, max_len=1).to_tsv(hanover.relations).splitlines()[0]
    head, body, support, *pcas = line.split("\t")
    assert head in hanover.relations
    assert body.split()[0] in {a.tag for a in A}
    assert int(support) >= 1 and len(pcas) == 3


def test_pca_zero_without_groundings(dahlem):
    rule = TemporalRule(dahlem.relation_id("wasBornIn"), ((A.BEFORE, dahlem.relation_id("wasBornIn")),))
    assert pca_score_link(rule, dahlem) == 0.0
    assert pca_score_time(rule, "start", dahlem) == 0.0


def test_pca_one_when_every_grounding_is_positive(hanover):
    married = hanover.relation_id("isMarriedTo")
    rule = TemporalRule(married, ((A.EQUALS, hanover.inverse(married)),))
    assert pca_score_link(rule, hanover) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_pca_matches_oracle(seed):
    ds = random_toy(seed)
    vocab = build_time_vocab(ds)
    years = [int(y) for y in vocab.years]
    train = ds.splits["train"]
    rules = mine_ruleset(ds, max_len=2)
    ctx = PcaContext.build(ds)
    for i, rule in enumerate(rules.rules):
        assert rules.pca[i, 0] == pca_link_oracle(rule, train)
        assert pca_score_link(rule, ctx=ctx) == pca_link_oracle(rule, train)
        assert pca_score_time(rule, "start", ctx=ctx) == pca_time_oracle(rule, train, years, "start")
        assert pca_score_time(rule, "end", ctx=ctx) == pca_time_oracle(rule, train, years, "end")
    assert np.all((rules.pca >= 0) & (rules.pca <= 1))


@pytest.mark.parametrize("seed", range(10))
def test_kernel_backends_agree(seed):
    ds = random_toy(seed, num_facts=12)
    g = build_walk_graph(ds)
    rules = mine_ruleset(ds, max_len=3, with_pca=False)
    args = (g.indptr, g.nbr, g.fact)
    for s in range(ds.num_entities):
        for o in range(ds.num_entities):
            np.testing.assert_array_equal(
                kernels.enumerate_walks(*args, s, o, 3, -1), _kernels_py.enumerate_walks(*args, s, o, 3, -1)
            )
    for rule in rules.rules[:40]:
        for s in range(ds.num_entities):
            for check, q in ((True, (2003, 2006)), (False, (0, 0))):
                for dst in (-1, 0, 1):
                    call = (g.indptr, g.rel, g.tb, g.te, g.nbr, g.fact, s, *q, rule.rel_array, rule.allen_array,
                            check, 0, dst)
                    np.testing.assert_array_equal(kernels.ground_body(*call), _kernels_py.ground_body(*call))


def test_max_len_must_be_positive(birthplace):
    g = build_walk_graph(birthplace)
    with pytest.raises(ValueError):
        mine_walks(g, head_of(birthplace, "David", "wBi", "London", 1975, 1975), 0)

