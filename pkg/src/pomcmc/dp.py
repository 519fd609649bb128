"""Exact per-order quantities by dynamic programming over ideal lattices.

For a parallel bucket order ``P`` the unnormalized ``log p(P, D)`` is the log
of a sum over maximal chains of the ideal lattice (the linear extensions of
``P``), where adding node ``v`` on top of ideal ``I`` contributes

    alpha_v(I) = sum_{S subset of I, |S| <= k} w_v(S).

Forward sums ``g`` run from the empty ideal, backward sums ``h`` from the
full one. Everything is kept in natural-log space.

A single bucket order uses the bucket-structured kernels; several parallel
parts fall back to explicit lattice edges.
"""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .errors import DataFormatError, ResourceCapError
from .posets import DEFAULT_IDEAL_CAP, IdealLattice, ParallelBucketOrder, count_ideals, enumerate_ideals
from .scores import ScoreTable

DEFAULT_EXACT_CAP = 24


@dataclass(frozen=True, eq=False)
class AlphaTables:
    """``log_alpha[v, I]`` for every node and every ideal index of ``lattice``."""

    log_alpha: np.ndarray
    lattice: IdealLattice


@dataclass(frozen=True, eq=False)
class ForwardBackward:
    log_g: np.ndarray
    log_h: np.ndarray

    @property
    def log_total(self) -> float:
        return float(self.log_g[-1])


@dataclass(eq=False)
class ArcPosteriorMatrix:
    """Arc probabilities: ``probs[u, v]`` is the probability of the arc u -> v.

    ``mode`` is ``"exact"``, ``"conditional"`` (given one order) or ``"mcmc"``.
    """

    probs: np.ndarray
    labels: tuple[str, ...]
    mode: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probs = np.clip(np.asarray(self.probs, dtype=float), 0.0, 1.0)
        np.fill_diagonal(self.probs, 0.0)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        meta = {"mode": self.mode, **self.meta}
        chain = meta.pop("chain", None)
        buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        if chain is not None:
            buf.write(f"#chain={chain}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.labels))
        for u in range(self.n):
            w.writerow([self.labels[u]] + [f"{p:.6f}" for p in self.probs[u]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ArcPosteriorMatrix":
        with open(path) as fh:
            lines = fh.read().splitlines()
        meta: dict = {}
        body = []
        for line in lines:
            if line.startswith("#chain="):
                meta["chain"] = line[len("#chain=") :]
            elif line.startswith("#"):
                meta.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            elif line:
                body.append(line)
        rows = list(csv.reader(body))
        if not rows:
            raise DataFormatError(f"{path}: no matrix rows")
        labels = tuple(rows[0][1:])
        probs = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
        if probs.shape != (len(labels), len(labels)):
            raise DataFormatError(f"{path}: matrix is not square")
        mode = meta.pop("mode", "unknown")
        return cls(probs, labels, mode, meta)


@dataclass(frozen=True)
class ModularFeature:
    """Product of per-node indicators over parent sets.

    ``predicates`` maps a node to a function of its parent set; absent nodes
    always contribute 1.
    """

    predicates: dict[int, Callable[[frozenset], bool]]

    @classmethod
    def arc(cls, u: int, v: int) -> "ModularFeature":
        return cls({v: lambda S, u=u: u in S})

    @classmethod
    def everywhere(cls, n: int, fn: Callable[[int, frozenset], bool]) -> "ModularFeature":
        return cls({v: (lambda S, v=v: fn(v, S)) for v in range(n)})

    def mask(self, scores: ScoreTable) -> np.ndarray:
        keep = np.ones(scores.log_weights.shape, dtype=bool)
        for v, pred in self.predicates.items():
            keep[v] = [bool(pred(frozenset(S))) for S in scores.sets_of(v)]
        return keep


class _BucketLayout:
    __slots__ = ("bucket_of", "bit_of", "bucket_size", "bucket_nodes", "offsets", "n_ideals", "bmax")

    def __init__(self, P: ParallelBucketOrder):
        (buckets,) = P.parts
        n = P.n
        sizes = [len(b) for b in buckets]
        self.bmax = max(sizes)
        self.bucket_size = np.array(sizes, dtype=np.int64)
        self.bucket_of = np.empty(n, dtype=np.int64)
        self.bit_of = np.empty(n, dtype=np.int64)
        self.bucket_nodes = np.full((len(buckets), self.bmax), -1, dtype=np.int64)
        for i, bucket in enumerate(buckets):
            for t, x in enumerate(bucket):
                self.bucket_of[x] = i
                self.bit_of[x] = t
                self.bucket_nodes[i, t] = x
        self.offsets = 1 + np.concatenate(([0], np.cumsum([(1 << b) - 1 for b in sizes])[:-1])).astype(np.int64)
        self.n_ideals = 1 + sum((1 << b) - 1 for b in sizes)


def _masked(log_w: np.ndarray, keep: np.ndarray | None) -> np.ndarray:
    if keep is None:
        return log_w
    return np.where(keep, log_w, -np.inf)


class Engine:
    """Per-order DP evaluations for one score table.

    ``log_joint`` results are memoized in a small LRU cache keyed by the order.
    """

    def __init__(self, scores: ScoreTable, cache_size: int = 4096, ideal_cap: int = DEFAULT_IDEAL_CAP):
        self.scores = scores
        self.ideal_cap = ideal_cap
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()
        self.evaluations = 0

    def _check(self, P: ParallelBucketOrder):
        if P.n != self.scores.n:
            raise ValueError(f"order has {P.n} nodes, scores have {self.scores.n}")
        count = count_ideals(P)
        if count > self.ideal_cap:
            raise ResourceCapError(f"order has {count} ideals, cap is {self.ideal_cap}", required=count)

    def _fast(self, P, log_w):
        lay = _BucketLayout(P)
        A = K.placement_alpha(self.scores.parent_sets, log_w, lay.bucket_of, lay.bit_of, lay.bucket_size, lay.bmax)
        return lay, A

    def _general(self, P, log_w):
        lattice = enumerate_ideals(P, self.ideal_cap)
        alpha = K.direct_alpha(self.scores.parent_sets, log_w, lattice.membership())
        return lattice, alpha

    def _log_joint(self, P, log_w) -> float:
        self._check(P)
        if P.r == 1:
            lay, A = self._fast(P, log_w)
            g = K.bucket_forward(A, lay.bucket_nodes, lay.bucket_size, lay.offsets, lay.n_ideals)
        else:
            lattice, alpha = self._general(P, log_w)
            g = K.edge_forward(alpha, lattice.edge_target, lattice.edge_node, lattice.edge_sub, len(lattice))
        return float(g[-1])

    def log_joint(self, P: ParallelBucketOrder) -> float:
        """Unnormalized ``log p(P, D)``."""
        if self.cache_size:
            hit = self._cache.get(P)
            if hit is not None:
                self._cache.move_to_end(P)
                return hit
        value = self._log_joint(P, self.scores.log_weights)
        self.evaluations += 1
        if self.cache_size:
            self._cache[P] = value
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return value

    def forward_backward(self, P: ParallelBucketOrder) -> ForwardBackward:
        self._check(P)
        log_w = self.scores.log_weights
        if P.r == 1:
            lay, A = self._fast(P, log_w)
            args = (A, lay.bucket_nodes, lay.bucket_size, lay.offsets, lay.n_ideals)
            return ForwardBackward(K.bucket_forward(*args), K.bucket_backward(*args))
        lattice, alpha = self._general(P, log_w)
        return forward_backward(AlphaTables(alpha, lattice), lattice)

    def arc_log_numerators(self, P: ParallelBucketOrder) -> tuple[np.ndarray, float]:
        """``log p(u->v, D, P)`` for all pairs and ``log p(D, P)``."""
        self._check(P)
        sc = self.scores
        log_w = sc.log_weights
        if P.r == 1:
            lay, A = self._fast(P, log_w)
            args = (A, lay.bucket_nodes, lay.bucket_size, lay.offsets, lay.n_ideals)
            g = K.bucket_forward(*args)
            h = K.bucket_backward(*args)
            num, _ = K.bucket_arc_numerators(
                sc.parent_sets, log_w, lay.bucket_of, lay.bit_of, lay.bucket_size, lay.offsets, g, h
            )
        else:
            lattice, alpha = self._general(P, log_w)
            lt = lattice
            g = K.edge_forward(alpha, lt.edge_target, lt.edge_node, lt.edge_sub, len(lt))
            h = K.edge_backward(alpha, lt.edge_target, lt.edge_node, lt.edge_sub, len(lt))
            num = K.edge_arc_numerators(
                sc.parent_sets, log_w, lt.membership(), lt.edge_target, lt.edge_node, lt.edge_sub, g, h
            )
        return num, float(g[-1])

    def arc_posteriors(self, P: ParallelBucketOrder, mode: str = "conditional") -> ArcPosteriorMatrix:
        num, total = self.arc_log_numerators(P)
        probs = np.exp(num - total)
        return ArcPosteriorMatrix(
            probs, self.scores.labels, mode, {"k": self.scores.k, "order": P.descriptor()}
        )

    def feature_log_joint(self, P: ParallelBucketOrder, feature: ModularFeature) -> float:
        """``log p(f, D, P)``."""
        return self._log_joint(P, _masked(self.scores.log_weights, feature.mask(self.scores)))

    def feature_posterior(self, P: ParallelBucketOrder, feature: ModularFeature) -> float:
        p = np.exp(self.feature_log_joint(P, feature) - self.log_joint(P))
        return float(min(max(p, 0.0), 1.0))


def build_alpha(scores: ScoreTable, P: ParallelBucketOrder, lattice: IdealLattice | None = None) -> AlphaTables:
    """Full ``alpha`` table over all ideals of ``P``."""
    if lattice is None:
        lattice = enumerate_ideals(P)
    if P.r == 1:
        lay = _BucketLayout(P)
        table = K.sweep_alpha(
            scores.parent_sets, scores.log_weights, lay.bucket_of, lay.bit_of,
            lay.bucket_size, lay.offsets, lay.n_ideals,
        )
    else:
        table = K.direct_alpha(scores.parent_sets, scores.log_weights, lattice.membership())
    return AlphaTables(table, lattice)


def forward_backward(alpha: AlphaTables, lattice: IdealLattice) -> ForwardBackward:
    """Chain sums over the cover edges of an explicit lattice."""
    lt = lattice
    args = (alpha.log_alpha, lt.edge_target, lt.edge_node, lt.edge_sub, len(lt))
    return ForwardBackward(K.edge_forward(*args), K.edge_backward(*args))


def log_joint(scores: ScoreTable, P: ParallelBucketOrder) -> float:
    return Engine(scores, cache_size=0).log_joint(P)


def arc_posteriors(scores: ScoreTable, P: ParallelBucketOrder) -> ArcPosteriorMatrix:
    return Engine(scores, cache_size=0).arc_posteriors(P)


def feature_posterior(scores: ScoreTable, P: ParallelBucketOrder, f: ModularFeature) -> float:
    return Engine(scores, cache_size=0).feature_posterior(P, f)


def exact_posteriors(scores: ScoreTable, cap: int = DEFAULT_EXACT_CAP) -> tuple[float, ArcPosteriorMatrix]:
    """Unconditional arc posteriors, via the single-bucket order whose only
    reordering covers every linear order."""
    n = scores.n
    if n > cap:
        raise ResourceCapError(f"exact mode supports n <= {cap}, got n = {n}", required=n)
    P = ParallelBucketOrder.single_bucket(n)
    engine = Engine(scores, cache_size=0, ideal_cap=max(DEFAULT_IDEAL_CAP, 1 << n))
    num, total = engine.arc_log_numerators(P)
    mat = ArcPosteriorMatrix(np.exp(num - total), scores.labels, "exact", {"k": scores.k, "order": P.descriptor()})
    return total, mat
