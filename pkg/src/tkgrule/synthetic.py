"""Synthetic temporal graphs with known generating rules."""
from __future__ import annotations

import numpy as np

from .core import SPLITS, TkgDataset, augment_inverses


def planted_dataset(num_entities: int = 200, num_pairs: int = 300, years=(1950, 2020), max_duration: int = 10,
                    holdout: float = 0.2, seed: int = 0) -> TkgDataset:
    """Two relations tied by ``rel_h(x, y, T)  iff  rel_1(y, x, T)``.

    Every pair contributes both facts. A held-out fact always keeps its
    partner in the training split, so the rule that links them stays
    groundable at evaluation time. Returns an augmented dataset.
    """
    rng = np.random.default_rng(seed)
    lo, hi = years
    seen = set()
    rows = {name: [] for name in SPLITS}
    while len(seen) < num_pairs:
        x, y = (int(v) for v in rng.choice(num_entities, size=2, replace=False))
        tb = int(rng.integers(lo, hi - max_duration + 1))
        te = tb + int(rng.integers(0, max_duration + 1))
        if (x, y, tb, te) in seen:
            continue
        seen.add((x, y, tb, te))
        head, body = (x, 0, y, tb, te), (y, 1, x, tb, te)
        u = rng.random()
        if u < holdout:
            held, kept = (head, body) if rng.random() < 0.5 else (body, head)
            split = "test" if u < holdout / 2 else "valid"
            rows[split].append(held)
            rows["train"].append(kept)
        else:
            rows["train"].extend([head, body])
    splits = {k: np.array(v, dtype=np.int64).reshape(-1, 5) for k, v in rows.items()}
    ds = TkgDataset(
        entities=[f"e{i}" for i in range(num_entities)],
        relations=["rel_h", "rel_1"],
        num_base_relations=2,
        splits=splits,
    )
    return augment_inverses(ds)
