"""Compiled log-domain kernels for the ideal-lattice dynamic programs.

Bucket layout arrays (single bucket order):
  bucket_of[v], bit_of[v]   bucket index of node v and its position there
  bucket_nodes[i, t]        node at position t of bucket i
  bucket_size[i]
  offsets[i]                ideal (i, T) has index offsets[i] - 1 + T
Parent sets are ``parent_sets[v, s, :]`` padded with -1.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def logadd(x, y):
    if x == NEG_INF:
        return y
    if y == NEG_INF:
        return x
    if x >= y:
        return x + np.log1p(np.exp(y - x))
    return y + np.log1p(np.exp(x - y))


@njit(cache=True, inline="always")
def _drop_bit(T, t):
    low = (1 << t) - 1
    return (T & low) | ((T >> 1) & ~low)


@njit(cache=True, inline="always")
def _locate(parent_sets, v, s, bucket_of, bit_of):
    """Highest bucket touched by set s of v and the set's mask within it (-1, 0 if empty)."""
    j = -1
    T = 0
    for col in range(parent_sets.shape[2]):
        u = parent_sets[v, s, col]
        if u < 0:
            break
        bu = bucket_of[u]
        if bu > j:
            j = bu
            T = 1 << bit_of[u]
        elif bu == j:
            T |= 1 << bit_of[u]
    return j, T


@njit(cache=True)
def placement_alpha(parent_sets, log_w, bucket_of, bit_of, bucket_size, bmax):
    """alpha_v(prefix_i ∪ T) for every node v (in bucket i) and T ⊆ B_i minus v.

    Column index is T with v's bit removed.
    """
    n = log_w.shape[0]
    out = np.full((n, 1 << (bmax - 1)), NEG_INF)
    scratch = np.empty(1 << bmax)
    for v in range(n):
        i = bucket_of[v]
        t = bit_of[v]
        b = bucket_size[i]
        full = 1 << b
        tbit = 1 << t
        c = scratch[:full]
        c[:] = NEG_INF
        base = NEG_INF
        for s in range(log_w.shape[1]):
            j, T = _locate(parent_sets, v, s, bucket_of, bit_of)
            if j > i:
                continue
            if j < i:
                base = logadd(base, log_w[v, s])
            else:
                c[T] = logadd(c[T], log_w[v, s])
        for bit in range(b):
            if bit == t:
                continue
            step = 1 << bit
            for T in range(full):
                if (T & step) and not (T & tbit):
                    c[T] = logadd(c[T], c[T ^ step])
        for T in range(full):
            if not (T & tbit):
                out[v, _drop_bit(T, t)] = logadd(base, c[T])
    return out


@njit(cache=True)
def sweep_alpha(parent_sets, log_w, bucket_of, bit_of, bucket_size, offsets, n_ideals):
    """alpha_v(I) for every node and every ideal of a bucket order."""
    n = log_w.shape[0]
    n_buckets = bucket_size.shape[0]
    out = np.full((n, n_ideals), NEG_INF)
    acc = np.empty(n_ideals)
    bmax = 0
    for i in range(n_buckets):
        bmax = max(bmax, bucket_size[i])
    scratch = np.empty(1 << bmax)
    for v in range(n):
        acc[:] = NEG_INF
        base = NEG_INF
        for s in range(log_w.shape[1]):
            j, T = _locate(parent_sets, v, s, bucket_of, bit_of)
            if j < 0:
                base = logadd(base, log_w[v, s])
            else:
                idx = offsets[j] - 1 + T
                acc[idx] = logadd(acc[idx], log_w[v, s])
        out[v, 0] = base
        for i in range(n_buckets):
            full = 1 << bucket_size[i]
            c = scratch[:full]
            c[0] = NEG_INF
            for T in range(1, full):
                c[T] = acc[offsets[i] - 1 + T]
            for bit in range(bucket_size[i]):
                step = 1 << bit
                for T in range(full):
                    if T & step:
                        c[T] = logadd(c[T], c[T ^ step])
            for T in range(1, full):
                out[v, offsets[i] - 1 + T] = logadd(base, c[T])
            base = out[v, offsets[i] - 2 + full]
    return out


@njit(cache=True)
def bucket_forward(A, bucket_nodes, bucket_size, offsets, n_ideals):
    g = np.full(n_ideals, NEG_INF)
    g[0] = 0.0
    for i in range(bucket_size.shape[0]):
        o = offsets[i] - 1
        b = bucket_size[i]
        for T in range(1, 1 << b):
            acc = NEG_INF
            for t in range(b):
                if T >> t & 1:
                    T0 = T ^ (1 << t)
                    acc = logadd(acc, g[o + T0] + A[bucket_nodes[i, t], _drop_bit(T0, t)])
            g[o + T] = acc
    return g


@njit(cache=True)
def bucket_backward(A, bucket_nodes, bucket_size, offsets, n_ideals):
    h = np.full(n_ideals, NEG_INF)
    h[n_ideals - 1] = 0.0
    for i in range(bucket_size.shape[0] - 1, -1, -1):
        o = offsets[i] - 1
        b = bucket_size[i]
        for T in range((1 << b) - 2, -1, -1):
            acc = NEG_INF
            for t in range(b):
                if not (T >> t & 1):
                    acc = logadd(acc, A[bucket_nodes[i, t], _drop_bit(T, t)] + h[o + (T | (1 << t))])
            h[o + T] = acc
    return h


@njit(cache=True)
def bucket_arc_numerators(parent_sets, log_w, bucket_of, bit_of, bucket_size, offsets, g, h):
    """log sum over chains and DAGs with arc u->v, for all (u, v); also per-node totals.

    For child v in bucket i, m(T) = g(prefix ∪ T) h(prefix ∪ T ∪ v) is summed
    over supersets, then each parent set S picks up upsum(S ∩ B_i).
    """
    n = log_w.shape[0]
    num = np.full((n, n), NEG_INF)
    totals = np.full(n, NEG_INF)
    bmax = 0
    for i in range(bucket_size.shape[0]):
        bmax = max(bmax, bucket_size[i])
    scratch = np.empty(1 << bmax)
    for v in range(n):
        i = bucket_of[v]
        t = bit_of[v]
        b = bucket_size[i]
        full = 1 << b
        tbit = 1 << t
        o = offsets[i] - 1
        m = scratch[:full]
        for T in range(full):
            if T & tbit:
                m[T] = NEG_INF
            else:
                m[T] = g[o + T] + h[o + (T | tbit)]
        for bit in range(b):
            if bit == t:
                continue
            step = 1 << bit
            for T in range(full):
                if not (T & step) and not (T & tbit):
                    m[T] = logadd(m[T], m[T | step])
        for s in range(log_w.shape[1]):
            j, T = _locate(parent_sets, v, s, bucket_of, bit_of)
            if j > i:
                continue
            if j < i:
                T = 0
            val = log_w[v, s] + m[T]
            totals[v] = logadd(totals[v], val)
            for col in range(parent_sets.shape[2]):
                u = parent_sets[v, s, col]
                if u < 0:
                    break
                num[u, v] = logadd(num[u, v], val)
    return num, totals


@njit(cache=True)
def direct_alpha(parent_sets, log_w, membership):
    """alpha_v(I) by testing every stored parent set against every ideal."""
    n = log_w.shape[0]
    n_ideals = membership.shape[0]
    out = np.full((n, n_ideals), NEG_INF)
    for I in range(n_ideals):
        for v in range(n):
            acc = NEG_INF
            for s in range(log_w.shape[1]):
                inside = True
                for col in range(parent_sets.shape[2]):
                    u = parent_sets[v, s, col]
                    if u < 0:
                        break
                    if not membership[I, u]:
                        inside = False
                        break
                if inside:
                    acc = logadd(acc, log_w[v, s])
            out[v, I] = acc
    return out


@njit(cache=True)
def edge_forward(alpha, edge_target, edge_node, edge_sub, n_ideals):
    g = np.full(n_ideals, NEG_INF)
    g[0] = 0.0
    for e in range(edge_target.shape[0]):
        sub = edge_sub[e]
        tg = edge_target[e]
        g[tg] = logadd(g[tg], g[sub] + alpha[edge_node[e], sub])
    return g


@njit(cache=True)
def edge_backward(alpha, edge_target, edge_node, edge_sub, n_ideals):
    h = np.full(n_ideals, NEG_INF)
    h[n_ideals - 1] = 0.0
    for e in range(edge_target.shape[0] - 1, -1, -1):
        sub = edge_sub[e]
        h[sub] = logadd(h[sub], alpha[edge_node[e], sub] + h[edge_target[e]])
    return h


@njit(cache=True)
def edge_arc_numerators(parent_sets, log_w, membership, edge_target, edge_node, edge_sub, g, h):
    n = log_w.shape[0]
    num = np.full((n, n), NEG_INF)
    for e in range(edge_target.shape[0]):
        v = edge_node[e]
        sub = edge_sub[e]
        base = g[sub] + h[edge_target[e]]
        if base == NEG_INF:
            continue
        for s in range(log_w.shape[1]):
            inside = True
            for col in range(parent_sets.shape[2]):
                u = parent_sets[v, s, col]
                if u < 0:
                    break
                if not membership[sub, u]:
                    inside = False
                    break
            if not inside:
                continue
            val = base + log_w[v, s]
            for col in range(parent_sets.shape[2]):
                u = parent_sets[v, s, col]
                if u < 0:
                    break
                num[u, v] = logadd(num[u, v], val)
    return num
