"""Parallel bucket orders, their ideals and reorderings.

Nodes are the integers ``0..n-1``. A bucket order is a sequence of
disjoint buckets; a parallel bucket order is a tuple of bucket orders on
disjoint node sets (the parts). Within a bucket nodes are kept sorted, so two
equal partial orders have equal representations.

The ideals of one bucket order ``B_0 B_1 ... B_{l-1}`` are indexed as
``offset_i - 1 + T`` where ``T`` is a bitmask over the positions of ``B_i``
and ``offset_i = 1 + sum_{j<i} (2**b_j - 1)``. The state with ``T`` full
coincides with ``(i + 1, empty)``, so index 0 is the empty ideal and the
last index is the whole part. For several parts the per-part indices are
combined in mixed radix, part 0 least significant.
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations, product

import numpy as np

from .errors import ConfigError, ResourceCapError

DEFAULT_IDEAL_CAP = 1 << 22

Bucket = tuple[int, ...]
Part = tuple[Bucket, ...]


@dataclass(frozen=True)
class ParallelBucketOrder:
    parts: tuple[Part, ...]

    def __post_init__(self):
        parts = tuple(tuple(tuple(sorted(int(x) for x in bucket)) for bucket in part) for part in self.parts)
        object.__setattr__(self, "parts", parts)
        seen = [x for part in parts for bucket in part for x in bucket]
        if not parts or any(not part for part in parts):
            raise ConfigError("every part needs at least one bucket")
        if any(not bucket for part in parts for bucket in part):
            raise ConfigError("empty bucket")
        if sorted(seen) != list(range(len(seen))):
            raise ConfigError("buckets must partition the nodes 0..n-1")

    @classmethod
    def single_bucket(cls, n: int) -> "ParallelBucketOrder":
        return cls(((tuple(range(n)),),))

    @classmethod
    def from_descriptor(cls, text: str) -> "ParallelBucketOrder":
        """Inverse of :meth:`descriptor`."""
        parts = []
        for part in text.strip().split("/"):
            parts.append(tuple(tuple(int(x) for x in b.split(",")) for b in part.split("|")))
        return cls(tuple(parts))

    def descriptor(self) -> str:
        """Compact text form, e.g. ``"0,1|2,3/4|5"`` (``|`` between buckets, ``/`` between parts)."""
        return "/".join("|".join(",".join(map(str, b)) for b in part) for part in self.parts)

    def __str__(self):
        return " || ".join("".join("{" + ",".join(map(str, b)) + "}" for b in part) for part in self.parts)

    @property
    def n(self) -> int:
        return sum(len(b) for part in self.parts for b in part)

    @property
    def r(self) -> int:
        return len(self.parts)

    @property
    def type_signature(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(len(b) for b in part) for part in self.parts)

    @cached_property
    def flat(self) -> tuple[int, ...]:
        """Nodes in slot order: part by part, bucket by bucket."""
        return tuple(x for part in self.parts for bucket in part for x in bucket)

    @cached_property
    def location(self) -> dict[int, tuple[int, int]]:
        """node -> (part, bucket)."""
        return {x: (p, i) for p, part in enumerate(self.parts) for i, bucket in enumerate(part) for x in bucket}

    def predecessors(self, v: int) -> frozenset[int]:
        p, i = self.location[v]
        return frozenset(x for bucket in self.parts[p][:i] for x in bucket)

    def relation(self) -> set[tuple[int, int]]:
        """Strict precedence pairs ``(u, v)``, u before v."""
        return {(u, v) for v in range(self.n) for u in self.predecessors(v)}

    def has_moves(self) -> bool:
        return any(len(part) > 1 for part in self.parts)


def _part_sizes(n: int, r: int) -> list[int]:
    q, rem = divmod(n, r)
    return [q + 1 if p < rem else q for p in range(r)]


def make_order(n: int, b: int, r: int = 1, assignment=None) -> ParallelBucketOrder:
    """Split nodes into ``r`` parts of size-``b`` buckets (last bucket may be smaller).

    ``assignment`` is a permutation of the nodes, an integer seed for a
    random permutation, or ``None`` for the identity.
    """
    if not 1 <= b <= n:
        raise ConfigError(f"bucket size {b} must lie in [1, {n}]")
    if r < 1:
        raise ConfigError("part count must be positive")
    if b * r > n:
        raise ConfigError(f"b*r = {b * r} exceeds n = {n}: some part would not hold a full bucket")
    if assignment is None:
        perm = list(range(n))
    elif isinstance(assignment, (int, np.integer)):
        perm = np.random.default_rng(int(assignment)).permutation(n).tolist()
    else:
        perm = [int(x) for x in assignment]
        if sorted(perm) != list(range(n)):
            raise ConfigError("assignment must be a permutation of 0..n-1")
    parts = []
    start = 0
    for size in _part_sizes(n, r):
        nodes = perm[start : start + size]
        start += size
        parts.append(tuple(tuple(nodes[i : i + b]) for i in range(0, size, b)))
    return ParallelBucketOrder(tuple(parts))


def _bucket_order_ideals(sizes) -> int:
    return sum(2**s for s in sizes) - len(sizes) + 1


def count_ideals(P: ParallelBucketOrder) -> int:
    return math.prod(_bucket_order_ideals(sizes) for sizes in P.type_signature)


def count_reorderings(P: ParallelBucketOrder) -> int:
    total = 1
    for sizes in P.type_signature:
        t = math.factorial(sum(sizes))
        for s in sizes:
            t //= math.factorial(s)
        total *= t
    return total


def apply_flip(P: ParallelBucketOrder, part: int, u: int, v: int) -> ParallelBucketOrder:
    """Exchange ``u`` and ``v`` between their (distinct) buckets of ``part``."""
    loc = P.location
    if u not in loc or v not in loc:
        raise ConfigError(f"unknown node in flip ({u}, {v})")
    (pu, iu), (pv, iv) = loc[u], loc[v]
    if pu != part or pv != part:
        raise ConfigError(f"nodes {u} and {v} are not both in part {part}")
    if iu == iv:
        raise ConfigError(f"nodes {u} and {v} share a bucket")
    buckets = list(P.parts[part])
    buckets[iu] = tuple(v if x == u else x for x in buckets[iu])
    buckets[iv] = tuple(u if x == v else x for x in buckets[iv])
    parts = list(P.parts)
    parts[part] = tuple(buckets)
    return ParallelBucketOrder(tuple(parts))


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_reordering(P: ParallelBucketOrder, seed=None) -> ParallelBucketOrder:
    """Uniform draw from the reorderings of ``P``; parts keep their node sets."""
    rng = _as_rng(seed)
    parts = []
    for part in P.parts:
        nodes = sorted(x for b in part for x in b)
        perm = [nodes[i] for i in rng.permutation(len(nodes))]
        out, start = [], 0
        for bucket in part:
            out.append(tuple(perm[start : start + len(bucket)]))
            start += len(bucket)
        parts.append(tuple(out))
    return ParallelBucketOrder(tuple(parts))


def _ordered_partitions(nodes, sizes):
    if not sizes:
        yield ()
        return
    for first in combinations(nodes, sizes[0]):
        rest = [x for x in nodes if x not in first]
        for tail in _ordered_partitions(rest, sizes[1:]):
            yield (first,) + tail


def reorderings(P: ParallelBucketOrder):
    """Iterate over all reorderings of ``P`` (small inputs only)."""
    per_part = []
    for part in P.parts:
        nodes = sorted(x for b in part for x in b)
        per_part.append(list(_ordered_partitions(nodes, [len(b) for b in part])))
    for combo in product(*per_part):
        yield ParallelBucketOrder(tuple(combo))


def valid_flips(P: ParallelBucketOrder) -> list[tuple[int, int, int]]:
    """All ``(part, u, v)`` with ``u`` in an earlier bucket than ``v``."""
    moves = []
    for p, part in enumerate(P.parts):
        for i, j in combinations(range(len(part)), 2):
            moves.extend((p, u, v) for u in part[i] for v in part[j])
    return moves


def linear_extensions(P: ParallelBucketOrder, max_n: int = 10) -> list[tuple[int, ...]]:
    n = P.n
    if n > max_n:
        raise ResourceCapError(f"linear extension enumeration limited to n <= {max_n}")
    preds = [P.predecessors(v) for v in range(n)]
    out: list[tuple[int, ...]] = []

    def extend(prefix, placed):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for v in range(n):
            if v not in placed and preds[v] <= placed:
                prefix.append(v)
                extend(prefix, placed | {v})
                prefix.pop()

    extend([], frozenset())
    return out


def is_compatible(arcs, P: ParallelBucketOrder) -> bool:
    """True iff the arcs together with the precedences of ``P`` are acyclic."""
    graph: dict[int, set[int]] = {v: set() for v in range(P.n)}
    for u, v in arcs:
        graph[v].add(u)
    for part in P.parts:
        for earlier, later in zip(part, part[1:]):
            for v in later:
                graph[v].update(earlier)
    try:
        list(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class _LatticeTemplate:
    """Ideal lattice of a type signature, expressed over slots rather than nodes."""

    sizes: np.ndarray
    slot_masks: np.ndarray
    digits: np.ndarray
    edge_target: np.ndarray
    edge_slot: np.ndarray
    edge_sub: np.ndarray
    part_offsets: tuple[tuple[int, ...], ...]


def _part_template(sizes):
    """Per-part ideals: (slot mask, size) and cover edges (ideal, local slot, sub-ideal)."""
    count = _bucket_order_ideals(sizes)
    masks = [0] * count
    card = [0] * count
    edges = []
    offsets = []
    start_slot, offset = 0, 1
    for bi, b in enumerate(sizes):
        offsets.append(offset)
        prefix = (1 << start_slot) - 1
        for T in range(1, 1 << b):
            idx = offset - 1 + T
            masks[idx] = prefix | (T << start_slot)
            card[idx] = start_slot + bin(T).count("1")
            for t in range(b):
                if T >> t & 1:
                    edges.append((idx, start_slot + t, offset - 1 + (T ^ (1 << t))))
        start_slot += b
        offset += (1 << b) - 1
    return masks, card, edges, tuple(offsets)


@lru_cache(maxsize=64)
def _template(signature) -> _LatticeTemplate:
    parts = [_part_template(sizes) for sizes in signature]
    counts = [len(p[0]) for p in parts]
    total = math.prod(counts)
    index = np.arange(total, dtype=np.int64)
    digits = np.empty((len(parts), total), dtype=np.int64)
    slot_masks = np.zeros(total, dtype=np.uint64)
    sizes = np.zeros(total, dtype=np.int64)
    targets, slots, subs = [], [], []
    stride, slot_offset = 1, 0
    for p, (masks, card, edges, _) in enumerate(parts):
        d = (index // stride) % counts[p]
        digits[p] = d
        pm = np.array(masks, dtype=np.uint64) << np.uint64(slot_offset)
        slot_masks |= pm[d]
        sizes += np.array(card, dtype=np.int64)[d]
        by_digit = [np.nonzero(d == a)[0] for a in range(counts[p])] if edges else []
        for a, t, a_sub in edges:
            tg = by_digit[a]
            targets.append(tg)
            slots.append(np.full(tg.size, slot_offset + t, dtype=np.int64))
            subs.append(tg + (a_sub - a) * stride)
        stride *= counts[p]
        slot_offset += sum(signature[p])
    if targets:
        target = np.concatenate(targets)
        slot = np.concatenate(slots)
        sub = np.concatenate(subs)
        order = np.lexsort((slot, target))
        target, slot, sub = target[order], slot[order], sub[order]
    else:
        target = slot = sub = np.zeros(0, dtype=np.int64)
    return _LatticeTemplate(sizes, slot_masks, digits, target, slot, sub, tuple(p[3] for p in parts))


class IdealLattice:
    """Indexed ideals of a parallel bucket order with their cover edges.

    ``edge_target[e]`` is an ideal, ``edge_node[e]`` one of its maximal
    elements and ``edge_sub[e]`` the index of the ideal without it. Edges are
    sorted by target, and every sub-ideal has a smaller index than its
    target, so increasing index order is a topological order.
    """

    def __init__(self, order: ParallelBucketOrder, template: _LatticeTemplate):
        self.order = order
        self._t = template
        flat = np.array(order.flat, dtype=np.int64)
        self.sizes = template.sizes
        self.edge_target = template.edge_target
        self.edge_sub = template.edge_sub
        self.edge_node = flat[template.edge_slot] if template.edge_slot.size else template.edge_slot
        masks = np.zeros_like(template.slot_masks)
        for slot, node in enumerate(order.flat):
            bit = (template.slot_masks >> np.uint64(slot)) & np.uint64(1)
            masks |= bit << np.uint64(node)
        self.masks = masks

    def __len__(self):
        return self.sizes.size

    @property
    def full_index(self) -> int:
        return len(self) - 1

    def members(self, idx: int) -> frozenset[int]:
        m = int(self.masks[idx])
        return frozenset(v for v in range(self.order.n) if m >> v & 1)

    def membership(self) -> np.ndarray:
        """Boolean matrix ``[ideal, node]``."""
        n = self.order.n
        return ((self.masks[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)).astype(bool)

    @cached_property
    def _by_mask(self) -> dict[int, int]:
        return {int(m): i for i, m in enumerate(self.masks)}

    def index_of(self, nodes) -> int:
        mask = sum(1 << v for v in nodes)
        try:
            return self._by_mask[mask]
        except KeyError:
            raise KeyError(f"{sorted(nodes)} is not an ideal") from None

    def descriptor(self, idx: int) -> tuple[tuple[int, frozenset[int]], ...]:
        """Per part: (active bucket index, nodes of that bucket in the ideal).

        The empty ideal of a part is ``(0, {})``; a full bucket ``i`` is
        reported as ``(i, B_i)``.
        """
        out = []
        for p, part in enumerate(self.order.parts):
            a = int(self._t.digits[p, idx])
            if a == 0:
                out.append((0, frozenset()))
                continue
            offsets = self._t.part_offsets[p]
            i = max(j for j, o in enumerate(offsets) if o <= a)
            T = a - offsets[i] + 1
            out.append((i, frozenset(x for t, x in enumerate(part[i]) if T >> t & 1)))
        return tuple(out)

    def covers(self, idx: int) -> list[tuple[int, int]]:
        sel = self.edge_target == idx
        return list(zip(self.edge_node[sel].tolist(), self.edge_sub[sel].tolist()))

    def extensions(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(I, J)`` of ideal indices with ``v`` not in ``I`` and ``J = I + {v}``."""
        sel = self.edge_node == v
        return self.edge_sub[sel], self.edge_target[sel]


def enumerate_ideals(P: ParallelBucketOrder, cap: int = DEFAULT_IDEAL_CAP) -> IdealLattice:
    count = count_ideals(P)
    if count > cap:
        raise ResourceCapError(f"order has {count} ideals, cap is {cap}", required=count)
    if P.n > 64:
        raise ResourceCapError("ideal bitmasks support at most 64 nodes")
    return IdealLattice(P, _template(P.type_signature))
