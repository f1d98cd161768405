"""Pure-Python graph kernels; the fallback for the compiled ``_kernels`` module.

Both modules expose the same three functions with the same signatures and
return values. Graph arguments are the CSR arrays of :class:`~tkgrule.core.WalkGraph`.
"""
import numpy as np

from .allen import classify_endpoints

BACKEND = "python"


def classify_many(b1, e1, b2, e2):
    b1, e1, b2, e2 = (np.asarray(a, dtype=np.int64) for a in (b1, e1, b2, e2))
    out = np.empty(len(b1), dtype=np.int8)
    for i in range(len(b1)):
        out[i] = classify_endpoints(b1[i], e1[i], b2[i], e2[i])
    return out


def _rel_block(indptr, rel, node, r):
    lo, hi = int(indptr[node]), int(indptr[node + 1])
    return lo + int(np.searchsorted(rel[lo:hi], r, side="left")), lo + int(np.searchsorted(rel[lo:hi], r, side="right"))


def enumerate_walks(indptr, nbr, fact, src, dst, max_len, excl_fact):
    """All walks of 1..max_len edges from ``src`` ending at ``dst``.

    Returns an ``(k, max_len)`` int64 array of edge indices padded with -1.
    Edges whose fact id equals ``excl_fact`` are never used.
    """
    out = []
    path = []

    def extend(node, depth):
        for i in range(indptr[node], indptr[node + 1]):
            if fact[i] == excl_fact:
                continue
            nxt = nbr[i]
            path.append(i)
            if nxt == dst:
                out.append(path + [-1] * (max_len - len(path)))
            if depth + 1 < max_len:
                extend(nxt, depth + 1)
            path.pop()

    if max_len >= 1:
        extend(src, 0)
    return np.array(out, dtype=np.int64).reshape(-1, max_len)


def ground_body(indptr, rel, tb, te, nbr, fact, src, q_tb, q_te, body_rel, body_allen, check_first, excl_fact, dst):
    """Edge sequences instantiating a rule body from ``src``.

    Hop ``i`` must use relation ``body_rel[i]`` and its interval must stand
    in ``body_allen[i]`` to the previous interval (the query interval for the
    first hop, checked only when ``check_first``). With ``dst >= 0`` the walk
    must end there. Returns an ``(k, m)`` int64 array of edge indices.
    """
    m = len(body_rel)
    out = []
    path = [0] * m

    def extend(node, depth, pb, pe):
        lo, hi = _rel_block(indptr, rel, node, body_rel[depth])
        last = depth == m - 1
        for i in range(lo, hi):
            if fact[i] == excl_fact:
                continue
            if last and dst >= 0 and nbr[i] != dst:
                continue
            if (depth > 0 or check_first) and classify_endpoints(pb, pe, tb[i], te[i]) != body_allen[depth]:
                continue
            path[depth] = i
            if last:
                out.append(list(path))
            else:
                extend(nbr[i], depth + 1, tb[i], te[i])

    if m:
        extend(src, 0, q_tb, q_te)
    return np.array(out, dtype=np.int64).reshape(-1, m)
