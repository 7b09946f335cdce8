"""Batched Monte Carlo collectors.

These run many replicates inside one jit loop with a single stream, which
removes the per-replicate generator setup cost; they are what the
acceptance suite and the distribution-level tests use.  The experiment
harness keeps one stream per replicate instead (scheduling-independent
aggregation); both are deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .tree import Model, RngStream, _grow_dary, _grow_linear
from .stats import _stat_pass

STAT_WIDTH = 8  # red, blue, red_cl, blue_cl, red_lf, blue_lf, root_size, root_col


@njit(cache=True, nogil=True)
def _batch_stats_linear(n, alpha, p, reps, out, rng):
    parent = np.empty(n, dtype=np.int64)
    outdeg = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.uint8)
    for r in range(reps):
        _grow_linear(n, alpha, p, parent, outdeg, colour, rng)
        _stat_pass(parent, outdeg, colour, out[r])


@njit(cache=True, nogil=True)
def _batch_stats_dary(n, d, p, reps, out, rng):
    parent = np.empty(n, dtype=np.int64)
    outdeg = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.uint8)
    for r in range(reps):
        _grow_dary(n, d, p, parent, outdeg, colour, rng)
        _stat_pass(parent, outdeg, colour, out[r])


def batch_stats(model: Model, n: int, reps: int, seed: int) -> np.ndarray:
    """(reps, 8) array of per-replicate statistic vectors, single stream."""
    out = np.zeros((reps, STAT_WIDTH), dtype=np.int64)
    rng = RngStream(seed).generator()
    if model.is_dary:
        _batch_stats_dary(n, model.d, model.p, reps, out, rng)
    else:
        _batch_stats_linear(n, model.alpha, model.p, reps, out, rng)
    return out


@njit(cache=True, nogil=True)
def _batch_trees_linear(n, alpha, p, reps, parents, colours, rng):
    parent = np.empty(n, dtype=np.int64)
    outdeg = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.uint8)
    for r in range(reps):
        _grow_linear(n, alpha, p, parent, outdeg, colour, rng)
        for v in range(n):
            parents[r, v] = parent[v]
            colours[r, v] = colour[v]


@njit(cache=True, nogil=True)
def _batch_trees_dary(n, d, p, reps, parents, colours, rng):
    parent = np.empty(n, dtype=np.int64)
    outdeg = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.uint8)
    for r in range(reps):
        _grow_dary(n, d, p, parent, outdeg, colour, rng)
        for v in range(n):
            parents[r, v] = parent[v]
            colours[r, v] = colour[v]


def batch_trees(model: Model, n: int, reps: int, seed: int):
    """(reps, n) parent and colour matrices, single stream."""
    parents = np.zeros((reps, n), dtype=np.int8)
    colours = np.zeros((reps, n), dtype=np.int8)
    rng = RngStream(seed).generator()
    if model.is_dary:
        _batch_trees_dary(n, model.d, model.p, reps, parents, colours, rng)
    else:
        _batch_trees_linear(n, model.alpha, model.p, reps, parents, colours, rng)
    return parents, colours


def empirical_code_distribution(model: Model, n: int, reps: int, seed: int) -> dict:
    """Empirical law of the canonical (shape, colouring) code at size n.

    Trees are packed into integer keys (mixed-radix parents, colour bits)
    so only the distinct keys are canonicalized.
    """
    from .stats import canonical_code

    parents, colours = batch_trees(model, n, reps, seed)
    key = np.zeros(reps, dtype=np.int64)
    radix = 1
    for v in range(1, n):
        key += parents[:, v].astype(np.int64) * radix
        radix *= v
    for v in range(n):
        key += colours[:, v].astype(np.int64) * radix
        radix *= 2
    counts = np.bincount(key)
    nz = np.nonzero(counts)[0]
    out: dict[bytes, float] = {}
    for k in nz:
        kk = int(k)
        parent = np.zeros(n, dtype=np.int64)
        colour = np.zeros(n, dtype=np.uint8)
        for v in range(1, n):
            parent[v] = kk % v
            kk //= v
        for v in range(n):
            colour[v] = kk % 2
            kk //= 2
        code = canonical_code((parent, colour))
        out[code] = out.get(code, 0.0) + counts[k] / reps
    return out


def empirical_stat_distribution(model: Model, n: int, reps: int, seed: int) -> dict:
    """Empirical joint law of the statistic vector at size n."""
    arr = batch_stats(model, n, reps, seed)
    out: dict[tuple, float] = {}
    uniq, counts = np.unique(arr, axis=0, return_counts=True)
    for row, c in zip(uniq, counts):
        out[tuple(int(x) for x in row)] = c / reps
    return out


@njit(cache=True, nogil=True)
def _batch_rc_checkpoints_dary(n_mid, n_end, d, p, reps, out, rng):
    parent = np.empty(n_end, dtype=np.int64)
    outdeg = np.empty(n_end, dtype=np.int64)
    colour = np.empty(n_end, dtype=np.uint8)
    in_root = np.empty(n_end, dtype=np.uint8)
    for r in range(reps):
        for v in range(n_end):
            outdeg[v] = 0
        parent[0] = -1
        colour[0] = 0 if rng.random() < 0.5 else 1
        in_root[0] = 1
        size = 1
        for v in range(1, n_end):
            while True:
                u = int(rng.random() * v)
                if u >= v:
                    u = v - 1
                if rng.random() * d < d - outdeg[u]:
                    break
            parent[v] = u
            outdeg[u] += 1
            if rng.random() < p:
                colour[v] = colour[u]
            else:
                colour[v] = 1 - colour[u]
            if colour[v] == colour[u] and in_root[u] == 1:
                in_root[v] = 1
                size += 1
            else:
                in_root[v] = 0
            if v == n_mid - 1:
                out[r, 0] = size
        out[r, 1] = size


def root_cluster_checkpoints(model: Model, n_mid: int, n_end: int, reps: int, seed: int):
    """Root-cluster sizes at two tree sizes along the same growth path
    (d-ary models); used to observe almost-sure stabilization."""
    if not model.is_dary:
        raise ValueError("checkpoint collector is for d-ary models")
    out = np.zeros((reps, 2), dtype=np.int64)
    rng = RngStream(seed).generator()
    _batch_rc_checkpoints_dary(n_mid, n_end, model.d, model.p, reps, out, rng)
    return out


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
