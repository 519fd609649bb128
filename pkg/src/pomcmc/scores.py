"""Local scores: K2 marginal likelihood times the modular parent-set prior.

A :class:`ScoreTable` stores, for every node ``v`` and every parent set
``S`` of at most ``k`` other nodes, ``log w_v(S) = log q_v(S) + log p(D_v | D_S)``
with ``q_v(S) = 1 / C(n-1, |S|)``. The position factor of the order-modular
prior is taken to be identically one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np
from numba import njit

from .data import Dataset
from .errors import DataFormatError, ResourceCapError

DEFAULT_MAX_BYTES = 2 * 1024**3


def log_parent_prior(v: int, size: int, n: int) -> float:
    """``-log C(n-1, size)``; the same for every node."""
    if not 0 <= size <= n - 1:
        raise ValueError(f"parent set size {size} out of range for n={n}")
    return -math.log(math.comb(n - 1, size))


def _log_factorials(upto: int) -> np.ndarray:
    return np.array([math.lgamma(i + 1) for i in range(upto + 1)])


@njit(cache=True)
def _k2_kernel(values, arity, parents, children, logfact, out):
    m = values.shape[0]
    codes = np.zeros(m, dtype=np.int64)
    for p in parents:
        for r in range(m):
            codes[r] = codes[r] * arity[p] + values[r, p]
    order = np.argsort(codes, kind="mergesort")
    group = np.empty(m, dtype=np.int64)
    n_groups = 0
    for idx in range(m):
        r = order[idx]
        if idx == 0 or codes[r] != codes[order[idx - 1]]:
            n_groups += 1
        group[r] = n_groups - 1
    for v in children:
        rv = arity[v]
        counts = np.zeros((n_groups, rv), dtype=np.int64)
        totals = np.zeros(n_groups, dtype=np.int64)
        for r in range(m):
            counts[group[r], values[r, v]] += 1
            totals[group[r]] += 1
        s = 0.0
        for j in range(n_groups):
            s += logfact[rv - 1] - logfact[totals[j] + rv - 1]
            for c in range(rv):
                s += logfact[counts[j, c]]
        out[v] = s


def _check_codes_fit(arity, parents):
    if math.prod(arity[p] for p in parents) >= 2**62:
        raise ResourceCapError("parent configuration space too large for 64-bit codes")


def log_local_score(v: int, S, data: Dataset) -> float:
    """K2 log marginal likelihood of column ``v`` given parent columns ``S``.

    Only parent configurations that occur in the data contribute.
    """
    parents = np.array(sorted(S), dtype=np.int64)
    if v in set(parents.tolist()):
        raise ValueError("a node cannot be its own parent")
    arity = np.asarray(data.arity, dtype=np.int64)
    _check_codes_fit(data.arity, parents)
    logfact = _log_factorials(data.m + int(arity.max()))
    out = np.zeros(data.n)
    _k2_kernel(data.values, arity, parents, np.array([v], dtype=np.int64), logfact, out)
    return float(out[v])


def n_parent_sets(n: int, k: int) -> int:
    return sum(math.comb(n - 1, j) for j in range(min(k, n - 1) + 1))


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Log weights of all bounded-size parent sets of every node.

    ``parent_sets[v, s]`` lists the members of set ``s`` of node ``v``
    padded with ``-1``; sets are ordered by size, then lexicographically.
    Every node has the same number of sets.
    """

    parent_sets: np.ndarray
    log_weights: np.ndarray
    k: int
    labels: tuple[str, ...] = ()
    digest: str = ""
    # Position factor of the order-modular prior; only the constant one is supported.
    rho: str = "uniform"

    def __post_init__(self):
        n = self.log_weights.shape[0]
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"X{v}" for v in range(n)))
        if not np.all(np.isfinite(self.log_weights)):
            raise DataFormatError("score table contains non-finite values")

    @property
    def n(self) -> int:
        return self.log_weights.shape[0]

    @property
    def n_sets(self) -> int:
        return self.log_weights.shape[1]

    def sets_of(self, v: int) -> list[tuple[int, ...]]:
        return [tuple(int(u) for u in row if u >= 0) for row in self.parent_sets[v]]

    @cached_property
    def _index(self) -> list[dict[frozenset, int]]:
        return [{frozenset(S): s for s, S in enumerate(self.sets_of(v))} for v in range(self.n)]

    def log_weight(self, v: int, S) -> float:
        return float(self.log_weights[v, self._index[v][frozenset(S)]])

    def entries(self, v: int):
        for S, w in zip(self.sets_of(v), self.log_weights[v]):
            yield S, float(w)

    @cached_property
    def parent_masks(self) -> np.ndarray:
        """Bitmask (uint64) of every stored parent set."""
        masks = np.zeros(self.log_weights.shape, dtype=np.uint64)
        for col in range(self.k):
            members = self.parent_sets[:, :, col].astype(np.int64)
            bits = np.where(members >= 0, np.left_shift(np.uint64(1), np.maximum(members, 0).astype(np.uint64)), 0)
            masks |= bits.astype(np.uint64)
        return masks

    def permute(self, perm) -> "ScoreTable":
        """Relabel nodes: new node ``i`` is old node ``perm[i]``."""
        perm = list(perm)
        inv = {old: new for new, old in enumerate(perm)}
        n = self.n
        sets = np.full_like(self.parent_sets, -1)
        weights = np.empty_like(self.log_weights)
        for new_v, old_v in enumerate(perm):
            relabeled = [tuple(sorted(inv[u] for u in S)) for S in self.sets_of(old_v)]
            order = sorted(range(len(relabeled)), key=lambda s: (len(relabeled[s]), relabeled[s]))
            for pos, s in enumerate(order):
                S = relabeled[s]
                sets[new_v, pos, : len(S)] = S
                weights[new_v, pos] = self.log_weights[old_v, s]
        return ScoreTable(sets, weights, self.k, tuple(self.labels[p] for p in perm), self.digest)


def _empty_arrays(n: int, k: int):
    k = min(k, max(n - 1, 0))
    count = n_parent_sets(n, k)
    return k, np.full((n, count, k), -1, dtype=np.int8), np.zeros((n, count))


def _fill(n, k, parent_sets, log_weights, weight_fn):
    pos = np.zeros(n, dtype=np.int64)
    for size in range(k + 1):
        for S in combinations(range(n), size):
            w = weight_fn(S)
            for v in range(n):
                if v in S:
                    continue
                parent_sets[v, pos[v], :size] = S
                log_weights[v, pos[v]] = w[v]
                pos[v] += 1


def build_score_table(data: Dataset, k: int, max_bytes: int = DEFAULT_MAX_BYTES) -> ScoreTable:
    """Precompute ``log w_v(S)`` for all nodes and all ``|S| <= k``."""
    n = data.n
    if k < 0 or (n > 1 and k > n - 1):
        raise ValueError(f"max indegree {k} must lie in [0, n-1] for n={n}")
    if n > 64:
        raise ResourceCapError("at most 64 nodes are supported")
    required = n * n_parent_sets(n, k) * (8 + k)
    if required > max_bytes:
        raise ResourceCapError(
            f"score table needs {required} bytes, cap is {max_bytes}", required=required
        )
    k, parent_sets, log_weights = _empty_arrays(n, k)
    arity = np.asarray(data.arity, dtype=np.int64)
    logfact = _log_factorials(data.m + int(arity.max()))
    priors = [log_parent_prior(0, s, n) for s in range(k + 1)]
    out = np.zeros(n)

    def weights(S):
        _check_codes_fit(data.arity, S)
        children = np.array([v for v in range(n) if v not in S], dtype=np.int64)
        _k2_kernel(data.values, arity, np.array(S, dtype=np.int64), children, logfact, out)
        return out + priors[len(S)]

    _fill(n, k, parent_sets, log_weights, weights)
    return ScoreTable(parent_sets, log_weights, k, data.labels, data.digest())


def random_score_table(n: int, k: int, seed: int = 0, spread: float = 30.0) -> ScoreTable:
    """Synthetic log weights for timing runs; values have no statistical meaning."""
    rng = np.random.default_rng(seed)
    k, parent_sets, _ = _empty_arrays(n, k)
    _fill(n, k, parent_sets, np.zeros(parent_sets.shape[:2]), lambda S: np.zeros(n))
    log_weights = -1000.0 + spread * rng.standard_normal(parent_sets.shape[:2])
    return ScoreTable(parent_sets, log_weights, k, digest=f"random-{seed}")


def write_score_cache(table: ScoreTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# pomcmc-scores n={table.n} k={table.k} digest={table.digest or '-'}\n")
        fh.write("# labels\t" + "\t".join(table.labels) + "\n")
        for v in range(table.n):
            for S, w in table.entries(v):
                key = ",".join(str(u) for u in S) if S else "-"
                fh.write(f"{v} {key} {w:.17g}\n")


def read_score_cache(path) -> ScoreTable:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# pomcmc-scores"):
        raise DataFormatError(f"{path}: not a score cache file")
    fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    n, k = int(fields["n"]), int(fields["k"])
    digest = "" if fields.get("digest", "-") == "-" else fields["digest"]
    body = lines[1:]
    labels: tuple[str, ...] = ()
    if body and body[0].startswith("# labels"):
        labels = tuple(body[0].split("\t")[1:])
        body = body[1:]
    k, parent_sets, log_weights = _empty_arrays(n, k)
    pos = np.zeros(n, dtype=np.int64)
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 fields")
        v = int(parts[0])
        S = [] if parts[1] == "-" else [int(u) for u in parts[1].split(",")]
        if pos[v] >= parent_sets.shape[1]:
            raise DataFormatError(f"{path}:{lineno}: too many entries for node {v}")
        parent_sets[v, pos[v], : len(S)] = S
        log_weights[v, pos[v]] = float(parts[2])
        pos[v] += 1
    if np.any(pos != parent_sets.shape[1]):
        raise DataFormatError(f"{path}: incomplete score table")
    return ScoreTable(parent_sets, log_weights, k, labels, digest)
