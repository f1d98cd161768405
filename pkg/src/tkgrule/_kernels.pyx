# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels. Mirrors ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t i64

# Codes follow AllenRelation.
cdef enum:
    BEFORE = 0
    AFTER = 1
    MEETS = 2
    MET_BY = 3
    OVERLAPS = 4
    OVERLAPPED_BY = 5
    STARTS = 6
    STARTED_BY = 7
    DURING = 8
    CONTAINS = 9
    FINISHES = 10
    FINISHED_BY = 11
    EQUALS = 12


cdef inline int _classify(i64 b1, i64 e1, i64 b2, i64 e2) nogil:
    if b1 == b2:
        if e1 == e2:
            return EQUALS
        return STARTS if e1 < e2 else STARTED_BY
    if e1 == e2:
        return FINISHES if b1 > b2 else FINISHED_BY
    if b1 < b2:
        if e1 > e2:
            return CONTAINS
        if e1 < b2:
            return BEFORE
        if e1 == b2:
            return MEETS
        return OVERLAPS
    if e1 < e2:
        return DURING
    if b1 > e2:
        return AFTER
    if b1 == e2:
        return MET_BY
    return OVERLAPPED_BY


def classify_many(b1, e1, b2, e2):
    cdef i64[::1] B1 = np.ascontiguousarray(b1, dtype=np.int64)
    cdef i64[::1] E1 = np.ascontiguousarray(e1, dtype=np.int64)
    cdef i64[::1] B2 = np.ascontiguousarray(b2, dtype=np.int64)
    cdef i64[::1] E2 = np.ascontiguousarray(e2, dtype=np.int64)
    cdef Py_ssize_t n = B1.shape[0], i
    out = np.empty(n, dtype=np.int8)
    cdef cnp.int8_t[::1] O = out
    with nogil:
        for i in range(n):
            O[i] = _classify(B1[i], E1[i], B2[i], E2[i])
    return out


cdef struct WalkCtx:
    const i64* indptr
    const i64* nbr
    const i64* fact
    i64 dst
    i64 excl
    int max_len


cdef void _walk(WalkCtx* ctx, i64 node, int depth, i64* path, vector[i64]* out) nogil:
    cdef i64 i, j, nxt
    for i in range(ctx.indptr[node], ctx.indptr[node + 1]):
        if ctx.fact[i] == ctx.excl:
            continue
        nxt = ctx.nbr[i]
        path[depth] = i
        if nxt == ctx.dst:
            for j in range(ctx.max_len):
                out.push_back(path[j] if j <= depth else -1)
        if depth + 1 < ctx.max_len:
            _walk(ctx, nxt, depth + 1, path, out)


def enumerate_walks(indptr, nbr, fact, i64 src, i64 dst, int max_len, i64 excl_fact):
    cdef i64[::1] IP = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] NB = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef i64[::1] FC = np.ascontiguousarray(fact, dtype=np.int64)
    cdef vector[i64] out
    cdef vector[i64] path
    cdef WalkCtx ctx
    if max_len < 1 or NB.shape[0] == 0:
        return np.zeros((0, max(max_len, 0)), dtype=np.int64)
    path.resize(max_len)
    ctx.indptr = &IP[0]
    ctx.nbr = &NB[0]
    ctx.fact = &FC[0]
    ctx.dst = dst
    ctx.excl = excl_fact
    ctx.max_len = max_len
    with nogil:
        _walk(&ctx, src, 0, path.data(), &out)
    res = np.empty(out.size(), dtype=np.int64)
    cdef i64[::1] R = res
    cdef size_t k
    for k in range(out.size()):
        R[k] = out[k]
    return res.reshape(-1, max_len)


cdef struct GroundCtx:
    const i64* indptr
    const i64* rel
    const i64* tb
    const i64* te
    const i64* nbr
    const i64* fact
    const i64* body_rel
    const i64* body_allen
    int m
    bint check_first
    i64 excl
    i64 dst


cdef inline i64 _lower(const i64* a, i64 lo, i64 hi, i64 x) nogil:
    cdef i64 mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _ground(GroundCtx* c, i64 node, int depth, i64 pb, i64 pe, i64* path, vector[i64]* out) nogil:
    cdef i64 r = c.body_rel[depth]
    cdef i64 lo = _lower(c.rel, c.indptr[node], c.indptr[node + 1], r)
    cdef i64 hi = _lower(c.rel, lo, c.indptr[node + 1], r + 1)
    cdef bint last = depth == c.m - 1
    cdef i64 i
    cdef int j
    for i in range(lo, hi):
        if c.fact[i] == c.excl:
            continue
        if last and c.dst >= 0 and c.nbr[i] != c.dst:
            continue
        if (depth > 0 or c.check_first) and _classify(pb, pe, c.tb[i], c.te[i]) != c.body_allen[depth]:
            continue
        path[depth] = i
        if last:
            for j in range(c.m):
                out.push_back(path[j])
        else:
            _ground(c, c.nbr[i], depth + 1, c.tb[i], c.te[i], path, out)


def ground_body(indptr, rel, tb, te, nbr, fact, i64 src, i64 q_tb, i64 q_te,
                body_rel, body_allen, bint check_first, i64 excl_fact, i64 dst):
    cdef i64[::1] IP = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] RL = np.ascontiguousarray(rel, dtype=np.int64)
    cdef i64[::1] TB = np.ascontiguousarray(tb, dtype=np.int64)
    cdef i64[::1] TE = np.ascontiguousarray(te, dtype=np.int64)
    cdef i64[::1] NB = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef i64[::1] FC = np.ascontiguousarray(fact, dtype=np.int64)
    cdef i64[::1] BR = np.ascontiguousarray(body_rel, dtype=np.int64)
    cdef i64[::1] BA = np.ascontiguousarray(body_allen, dtype=np.int64)
    cdef int m = BR.shape[0]
    cdef vector[i64] out
    cdef vector[i64] path
    cdef GroundCtx c
    if m == 0 or RL.shape[0] == 0:
        return np.zeros((0, m), dtype=np.int64)
    path.resize(m)
    c.indptr = &IP[0]
    c.rel = &RL[0]
    c.tb = &TB[0]
    c.te = &TE[0]
    c.nbr = &NB[0]
    c.fact = &FC[0]
    c.body_rel = &BR[0]
    c.body_allen = &BA[0]
    c.m = m
    c.check_first = check_first
    c.excl = excl_fact
    c.dst = dst
    with nogil:
        _ground(&c, src, 0, q_tb, q_te, path.data(), &out)
    res = np.empty(out.size(), dtype=np.int64)
    cdef i64[::1] R = res
    cdef size_t k
    for k in range(out.size()):
        R[k] = out[k]
    return res.reshape(-1, m)
