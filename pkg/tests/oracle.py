"""Slow reference implementations written straight from the coefficient
formulas, with no vectorisation and no shared code with the package kernels."""

from __future__ import annotations

import itertools
import math

import numpy as np


def dense_box(K, N):
    for d in itertools.product(range(N + 1), repeat=K):
        if sum(d) <= N:
            yield d


def comb(top, bottom):
    out = 1
    for t, b in zip(top, bottom):
        if b > t:
            return 0
        out *= math.comb(t, b)
    return out


def to_dense_dict(v, K):
    out = {}
    for a, c in v.terms.items():
        out[tuple(a.dense(K))] = np.asarray(c, dtype=float)
    return out


def naive_d(u, v, K, N):
    ud, vd = to_dense_dict(u, K), to_dense_dict(v, K)
    res = {}
    for a in dense_box(K, N):
        acc = 0.0
        for b, ub in ud.items():
            ab = tuple(x + y for x, y in zip(a, b))
            if ab in vd:
                acc = acc + math.sqrt(comb(ab, b)) * np.outer(vd[ab], ub)
        if np.any(np.asarray(acc) != 0):
            res[a] = acc
    return res


def naive_delta(u, f, K, N):
    ud, fd = to_dense_dict(u, K), to_dense_dict(f, K)
    res = {}
    for a in dense_box(K, N):
        acc = 0.0
        for b, fb in fd.items():
            rest = tuple(x - y for x, y in zip(a, b))
            if min(rest) < 0 or rest not in ud:
                continue
            acc = acc + math.sqrt(comb(a, b)) * (fb @ ud[rest])
        if np.any(np.asarray(acc) != 0):
            res[a] = acc
    return res


def naive_ou(u, v, K, N):
    ud, vd = to_dense_dict(u, K), to_dense_dict(v, K)
    res = {}
    for a in dense_box(K, N):
        acc = 0.0
        for b in dense_box(K, sum(a)):
            rest = tuple(x - y for x, y in zip(a, b))
            if min(rest) < 0 or rest not in ud:
                continue
            for g, ug in ud.items():
                bg = tuple(x + y for x, y in zip(b, g))
                if bg in vd:
                    w = math.sqrt(comb(a, b) * comb(bg, b))
                    acc = acc + w * vd[bg] * float(ug @ ud[rest])
        if np.any(np.asarray(acc) != 0):
            res[a] = acc
    return res


def naive_wick(f, eta, K, N):
    fd, ed = to_dense_dict(f, K), to_dense_dict(eta, K)
    res = {}
    for a in dense_box(K, N):
        acc = 0.0
        for b, eb in ed.items():
            rest = tuple(x - y for x, y in zip(a, b))
            if min(rest) < 0 or rest not in fd:
                continue
            acc = acc + math.sqrt(comb(a, b)) * fd[rest] * eb[0]
        if np.any(np.asarray(acc) != 0):
            res[a] = acc
    return res


def max_rel_diff(expansion, ref: dict, K) -> float:
    got = to_dense_dict(expansion, K)
    keys = set(got) | set(ref)
    worst = 0.0
    for k in keys:
        x = got.get(k, 0.0)
        y = ref.get(k, 0.0)
        scale = max(1.0, float(np.max(np.abs(y))) if np.ndim(y) else abs(y))
        worst = max(worst, float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) / scale)
    return worst
