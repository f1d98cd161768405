"""Compare the compiled and pure-Python graph kernels on a planted dataset.

    python3 benchmarks/bench_kernels.py [--entities 200] [--repeat 3]
"""
import argparse
import time

import numpy as np

from tkgrule import _kernels_py
from tkgrule.core import build_walk_graph
from tkgrule.mining import mine_ruleset
from tkgrule.synthetic import planted_dataset

try:
    from tkgrule import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def workloads(backend, ds, graph, rules, rng):
    train = ds.splits["train"]
    n = len(train) // 2
    heads = train[rng.choice(len(train), size=min(300, len(train)), replace=False)]
    b1, b2 = rng.integers(0, 3000, 200_000), rng.integers(0, 3000, 200_000)
    e1, e2 = b1 + rng.integers(0, 30, 200_000), b2 + rng.integers(0, 30, 200_000)
    g = graph
    sample = rules.rules[:: max(len(rules) // 200, 1)]

    def classify():
        backend.classify_many(b1, e1, b2, e2)

    def walks():
        for i, (s, _, o, _, _) in enumerate(heads.tolist()):
            backend.enumerate_walks(g.indptr, g.nbr, g.fact, s, o, 3, i % n)

    def ground():
        for s, _, _, b, e in heads[:100].tolist():
            for rule in sample:
                backend.ground_body(g.indptr, g.rel, g.tb, g.te, g.nbr, g.fact, s, b, e,
                                    rule.rel_array, rule.allen_array, True, -1, -1)

    return {"classify_many (200k pairs)": classify, "enumerate_walks (300 heads)": walks,
            "ground_body (100 queries x rules)": ground}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entities", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    ds = planted_dataset(num_entities=args.entities, seed=0)
    graph = build_walk_graph(ds)
    rules = mine_ruleset(ds, max_len=3, with_pca=False)
    backends = [("python", _kernels_py)] + ([("compiled", _kernels_c)] if _kernels_c else [])
    results = {}
    for name, backend in backends:
        for label, fn in workloads(backend, ds, graph, rules, np.random.default_rng(0)).items():
            results.setdefault(label, {})[name] = best_of(fn, args.repeat)
    print(f"{'kernel':<36}{'python (s)':>12}{'compiled (s)':>14}{'speedup':>10}")
    for label, row in results.items():
        py, c = row["python"], row.get("compiled")
        tail = f"{c:>14.4f}{py / c:>9.1f}x" if c else f"{'n/a':>14}{'':>10}"
        print(f"{label:<36}{py:>12.4f}{tail}")


if __name__ == "__main__":
    main()
