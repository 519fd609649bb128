"""Brute-force reference computations, independent of the DP code paths."""

from __future__ import annotations

import math
from itertools import combinations, permutations

import numpy as np

from pomcmc import Dataset, ParallelBucketOrder


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        return -math.inf
    m = a.max()
    if m == -math.inf:
        return -math.inf
    return float(m + np.log(np.exp(a - m).sum()))


def sequential_k2(column, parent_columns, arity) -> float:
    """Product of Dirichlet(1) predictive probabilities, row by row."""
    counts: dict = {}
    logp = 0.0
    for i, x in enumerate(column):
        cfg = tuple(pc[i] for pc in parent_columns)
        c = counts.setdefault(cfg, [0] * arity)
        logp += math.log((c[x] + 1) / (sum(c) + arity))
        c[x] += 1
    return logp


def precedes(P: ParallelBucketOrder) -> set[tuple[int, int]]:
    rel = set()
    for part in P.parts:
        for i, earlier in enumerate(part):
            for later in part[i + 1 :]:
                rel.update((u, v) for u in earlier for v in later)
    return rel


def brute_linear_extensions(P: ParallelBucketOrder):
    rel = precedes(P)
    for L in permutations(range(P.n)):
        pos = {v: i for i, v in enumerate(L)}
        if all(pos[u] < pos[v] for u, v in rel):
            yield L


def brute_ideals(P: ParallelBucketOrder) -> set[frozenset]:
    rel = precedes(P)
    out = set()
    for mask in range(1 << P.n):
        I = {v for v in range(P.n) if mask >> v & 1}
        if all(u in I for u, v in rel if v in I):
            out.add(frozenset(I))
    return out


def brute_reorderings(P: ParallelBucketOrder) -> set[ParallelBucketOrder]:
    """Distinct orders obtained by relabeling each part with every permutation of its nodes."""
    per_part = []
    for part in P.parts:
        nodes = sorted(x for b in part for x in b)
        sizes = [len(b) for b in part]
        options = set()
        for perm in permutations(nodes):
            buckets, start = [], 0
            for s in sizes:
                buckets.append(tuple(sorted(perm[start : start + s])))
                start += s
            options.add(tuple(buckets))
        per_part.append(sorted(options))
    out = {()}
    for opts in per_part:
        out = {prev + (o,) for prev in out for o in opts}
    return {ParallelBucketOrder(p) for p in out}


def dag_sums(scores, P: ParallelBucketOrder, keep=None):
    """Enumerate (linear extension, DAG) pairs explicitly.

    Returns ``(log total, log arc numerators [u, v], log feature total)``
    where the feature is ``keep(v, S)`` applied node-wise (``None``: no feature).
    """
    n = scores.n
    totals, feats = [], []
    arc_terms = [[[] for _ in range(n)] for _ in range(n)]
    entries = [list(scores.entries(v)) for v in range(n)]
    for L in brute_linear_extensions(P):
        pos = {v: i for i, v in enumerate(L)}
        choices = []
        for v in range(n):
            choices.append([(S, w) for S, w in entries[v] if all(pos[u] < pos[v] for u in S)])
        # One grid cell per DAG compatible with L.
        grid = np.zeros(())
        for v in range(n):
            grid = np.add.outer(grid, np.array([w for _, w in choices[v]]))
        totals.append(logsumexp(grid))
        for v in range(n):
            for u in range(n):
                if u == v:
                    continue
                idx = [i for i, (S, _) in enumerate(choices[v]) if u in S]
                if idx:
                    arc_terms[u][v].append(logsumexp(np.take(grid, idx, axis=v)))
        if keep is not None:
            fgrid = grid
            for v in range(n):
                idx = [i for i, (S, _) in enumerate(choices[v]) if keep(v, frozenset(S))]
                fgrid = np.take(fgrid, idx, axis=v)
            feats.append(logsumexp(fgrid))
    arcs = np.array([[logsumexp(arc_terms[u][v]) for v in range(n)] for u in range(n)])
    return logsumexp(totals), arcs, (logsumexp(feats) if keep is not None else None)


def random_order(n: int, rng: np.random.Generator, r: int | None = None) -> ParallelBucketOrder:
    """Random parallel bucket order with a random type signature."""
    if r is None:
        r = int(rng.integers(1, min(n, 3) + 1))
    nodes = rng.permutation(n).tolist()
    cuts = sorted(rng.choice(np.arange(1, n), size=r - 1, replace=False).tolist()) if r > 1 else []
    bounds = [0] + cuts + [n]
    parts = []
    for a, b in zip(bounds, bounds[1:]):
        chunk = nodes[a:b]
        m = len(chunk)
        k = int(rng.integers(0, m))
        inner = sorted(rng.choice(np.arange(1, m), size=k, replace=False).tolist()) if m > 1 and k else []
        edges = [0] + inner + [m]
        parts.append(tuple(tuple(chunk[x:y]) for x, y in zip(edges, edges[1:])))
    return ParallelBucketOrder(tuple(parts))


def random_dataset(n: int, m: int, rng: np.random.Generator, max_arity: int = 3) -> Dataset:
    arity = rng.integers(2, max_arity + 1, size=n)
    values = np.column_stack([rng.integers(0, a, size=m) for a in arity])
    # Correlate neighbouring columns so that scores differ across parent sets.
    for v in range(1, n):
        flip = rng.random(m) < 0.6
        values[flip, v] = values[flip, v - 1] % arity[v]
    return Dataset(values, arity.tolist(), tuple(f"V{v}" for v in range(n)))


def subsets_upto(items, k):
    for size in range(k + 1):
        yield from combinations(items, size)
