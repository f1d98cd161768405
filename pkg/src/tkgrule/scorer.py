"""Neural rule confidence: GRU path embeddings, cosine head matching, PCA prior.

Every forward function returns the values needed by its backward partner, so
gradients are exact reverse-mode derivatives in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allen import NUM_ALLEN
from .mining import END, OBJECT, START, TemporalRule

_ARRAYS = (
    "allen_emb", "rel_emb", "head_obj", "head_start", "head_end",
    "W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_n", "U_n", "b_n",
)


@dataclass
class ModelParams:
    """All learnable tensors. GRU input size is ``2 * dim``, hidden size ``dim``.

    ``standard_gru`` switches the candidate state from ``r * h`` to
    ``r * (U_n @ h)``; ``U_n`` only receives gradient in that mode.
    """

    allen_emb: np.ndarray
    rel_emb: np.ndarray
    head_obj: np.ndarray
    head_start: np.ndarray
    head_end: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_n: np.ndarray
    U_n: np.ndarray
    b_n: np.ndarray
    standard_gru: bool = False

    @property
    def dim(self) -> int:
        return self.b_r.shape[0]

    @property
    def num_relations(self) -> int:
        return self.rel_emb.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _ARRAYS}

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()}, standard_gru=self.standard_gru)

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()}, standard_gru=self.standard_gru)

    def head(self, target: int) -> np.ndarray:
        return (self.head_obj, self.head_start, self.head_end)[target]


# Gradients share the parameter layout.
GradientBundle = ModelParams


def init_params(num_relations: int, dim: int, seed: int = 0, standard_gru: bool = False) -> ModelParams:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if num_relations < 1:
        raise ValueError("num_relations must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    return ModelParams(
        allen_emb=u(NUM_ALLEN, dim),
        rel_emb=u(num_relations, dim),
        head_obj=u(num_relations, dim),
        head_start=u(num_relations, dim),
        head_end=u(num_relations, dim),
        W_r=u(dim, 2 * dim), U_r=u(dim, dim), b_r=np.zeros(dim),
        W_z=u(dim, 2 * dim), U_z=u(dim, dim), b_z=np.zeros(dim),
        W_n=u(dim, 2 * dim), U_n=u(dim, dim), b_n=np.zeros(dim),
        standard_gru=standard_gru,
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# GRU


def gru_forward(params: ModelParams, allen_ids: np.ndarray, rel_ids: np.ndarray):
    """Run the GRU over ``k`` bodies of equal length ``m`` (``(k, m)`` id arrays).

    Returns the final hidden states ``(k, dim)`` and the per-step cache.
    """
    allen_ids = np.asarray(allen_ids, dtype=np.int64)
    rel_ids = np.asarray(rel_ids, dtype=np.int64)
    if allen_ids.size and (allen_ids.min() < 0 or allen_ids.max() >= NUM_ALLEN):
        raise ValueError("Allen relation id out of range")
    if rel_ids.size and (rel_ids.min() < 0 or rel_ids.max() >= params.num_relations):
        raise ValueError("relation id out of range")
    k, m = allen_ids.shape
    if m == 0:
        raise ValueError("rule body must be non-empty")
    p = params
    h = np.zeros((k, p.dim))
    steps = []
    for t in range(m):
        x = np.concatenate([p.allen_emb[allen_ids[:, t]], p.rel_emb[rel_ids[:, t]]], axis=1)
        r = _sigmoid(x @ p.W_r.T + h @ p.U_r.T + p.b_r)
        z = _sigmoid(x @ p.W_z.T + h @ p.U_z.T + p.b_z)
        uh = h @ p.U_n.T if p.standard_gru else h
        n = np.tanh(x @ p.W_n.T + r * uh + p.b_n)
        h_new = (1.0 - z) * n + z * h
        steps.append((x, h, r, z, n, uh))
        h = h_new
    return h, (allen_ids, rel_ids, steps)


def gru_backward(params: ModelParams, cache, dh_out: np.ndarray, grads: ModelParams) -> None:
    """Accumulate gradients of the final hidden states into ``grads``."""
    allen_ids, rel_ids, steps = cache
    p, g = params, grads
    d = p.dim
    dh = dh_out
    for t in range(len(steps) - 1, -1, -1):
        x, h, r, z, n, uh = steps[t]
        dn = dh * (1.0 - z)
        dz = dh * (h - n)
        dh_prev = dh * z
        dan = dn * (1.0 - n * n)
        g.W_n += dan.T @ x
        g.b_n += dan.sum(axis=0)
        dx = dan @ p.W_n
        dr = dan * uh
        duh = dan * r
        if p.standard_gru:
            g.U_n += duh.T @ h
            dh_prev += duh @ p.U_n
        else:
            dh_prev += duh
        daz = dz * z * (1.0 - z)
        g.W_z += daz.T @ x
        g.U_z += daz.T @ h
        g.b_z += daz.sum(axis=0)
        dx += daz @ p.W_z
        dh_prev += daz @ p.U_z
        dar = dr * r * (1.0 - r)
        g.W_r += dar.T @ x
        g.U_r += dar.T @ h
        g.b_r += dar.sum(axis=0)
        dx += dar @ p.W_r
        dh_prev += dar @ p.U_r
        np.add.at(g.allen_emb, allen_ids[:, t], dx[:, :d])
        np.add.at(g.rel_emb, rel_ids[:, t], dx[:, d:])
        dh = dh_prev


def encode_bodies(params: ModelParams, allen_ids: np.ndarray, rel_ids: np.ndarray, lengths: np.ndarray):
    """Path embeddings for bodies of mixed length (padded id arrays)."""
    lengths = np.asarray(lengths, dtype=np.int64)
    out = np.zeros((len(lengths), params.dim))
    groups = []
    for m in np.unique(lengths):
        pos = np.flatnonzero(lengths == m)
        h, cache = gru_forward(params, allen_ids[pos, :m], rel_ids[pos, :m])
        out[pos] = h
        groups.append((pos, cache))
    return out, groups


def encode_backward(params: ModelParams, groups, dP: np.ndarray, grads: ModelParams) -> None:
    for pos, cache in groups:
        gru_backward(params, cache, dP[pos], grads)


def path_embedding(params: ModelParams, rule: TemporalRule) -> np.ndarray:
    h, _ = gru_forward(params, np.array([rule.allens]), np.array([rule.rels]))
    return h[0]


# ---------------------------------------------------------------------------
# Similarity


def similarity(p: np.ndarray, head_vec: np.ndarray) -> float:
    """Cosine similarity mapped affinely onto [0, 1]; 0.5 if either side is zero."""
    p = np.asarray(p, dtype=np.float64)
    head_vec = np.asarray(head_vec, dtype=np.float64)
    if p.shape != head_vec.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {head_vec.shape}")
    return float(similarity_batch(p[None, :], head_vec)[0][0])


def similarity_batch(P: np.ndarray, v: np.ndarray):
    """Row-wise normalized cosine of ``P`` against ``v``, with its backward cache."""
    pn = np.linalg.norm(P, axis=1)
    vn = float(np.linalg.norm(v))
    ok = (pn > 0) & (vn > 0)
    cos = np.zeros(len(P))
    cos[ok] = (P[ok] @ v) / (pn[ok] * vn)
    return 0.5 * (cos + 1.0), (P, v, pn, vn, ok, cos)


def similarity_backward(cache, dsim: np.ndarray):
    """Gradients ``(dP, dv)`` of the normalized cosine; zero rows contribute nothing."""
    P, v, pn, vn, ok, cos = cache
    dP = np.zeros_like(P)
    dv = np.zeros_like(v)
    if not ok.any():
        return dP, dv
    dc = 0.5 * dsim[ok]
    Pk, pk, ck = P[ok], pn[ok][:, None], cos[ok][:, None]
    dP[ok] = dc[:, None] * (v[None, :] / (pk * vn) - ck * Pk / (pk * pk))
    dv = (dc[:, None] * (Pk / (pk * vn) - ck * v[None, :] / (vn * vn))).sum(axis=0)
    return dP, dv


def rule_score(params: ModelParams, rule: TemporalRule, target: int | str, pca: float) -> float:
    """Learned confidence of one rule: head similarity times the PCA prior."""
    if isinstance(target, str):
        target = {"object": OBJECT, "start": START, "end": END}[target]
    if not 0.0 <= pca <= 1.0:
        raise ValueError("pca must lie in [0, 1]")
    p = path_embedding(params, rule)
    return similarity(p, params.head(target)[rule.head]) * pca


# ---------------------------------------------------------------------------
# Batched rule scores with backward


@dataclass
class RuleTape:
    head_rel: int
    groups: list
    sims: dict = field(default_factory=dict)
    pca: dict = field(default_factory=dict)


def rule_scores(params: ModelParams, ruleset, rule_idx: np.ndarray, head_rel: int, targets=(OBJECT,)):
    """Scores of ``ruleset.rules[rule_idx]`` for each target; returns ``({target: psi}, tape)``."""
    rule_idx = np.asarray(rule_idx, dtype=np.int64)
    P, groups = encode_bodies(
        params, ruleset.allen_ids[rule_idx], ruleset.rel_ids[rule_idx], ruleset.lengths[rule_idx]
    )
    tape = RuleTape(head_rel, groups)
    psi = {}
    for t in targets:
        sim, cache = similarity_batch(P, params.head(t)[head_rel])
        pca = ruleset.pca[rule_idx, t]
        tape.sims[t] = cache
        tape.pca[t] = pca
        psi[t] = sim * pca
    return psi, tape


def backward(params: ModelParams, tape: RuleTape, dpsi: dict, grads: GradientBundle | None = None) -> GradientBundle:
    """Exact gradient of a scalar loss given its gradients w.r.t. the rule scores."""
    if grads is None:
        grads = params.zeros_like()
    dP = None
    for t, d in dpsi.items():
        dPt, dv = similarity_backward(tape.sims[t], np.asarray(d) * tape.pca[t])
        grads.head(t)[tape.head_rel] += dv
        dP = dPt if dP is None else dP + dPt
    if dP is not None:
        encode_backward(params, tape.groups, dP, grads)
    return grads
