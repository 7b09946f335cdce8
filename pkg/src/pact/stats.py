"""Per-tree statistics: colour counts, clusters, leaves, root cluster,
and coloured fringe-subtree censuses.

All functions are pure reads of an immutable ColouredTree and safe to call
from parallel replicate workers.  The fused single-pass collector
``stat_vector`` is what the Monte Carlo harness uses per replicate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .tree import RED, BLUE, ColouredTree, percolation_forest

#: largest pattern size accepted for fringe censuses
K_MAX = 8


@dataclass(frozen=True)
class StatVector:
    red_vertices: int
    blue_vertices: int
    red_clusters: int
    blue_clusters: int
    red_leaves: int
    blue_leaves: int
    root_cluster_size: int
    root_colour: int

    def as_tuple(self) -> tuple:
        return (
            self.red_vertices,
            self.blue_vertices,
            self.red_clusters,
            self.blue_clusters,
            self.red_leaves,
            self.blue_leaves,
            self.root_cluster_size,
            self.root_colour,
        )


@njit(cache=True, nogil=True)
def _stat_pass(parent, outdeg, colour, out):
    n = parent.shape[0]
    red = 0
    redc = 0
    bluec = 0
    redl = 0
    bluel = 0
    root_size = 0
    # in-root-cluster flags propagate forward because parent[v] < v
    in_root = np.zeros(n, dtype=np.uint8)
    in_root[0] = 1
    for v in range(n):
        c = colour[v]
        if c == RED:
            red += 1
        if outdeg[v] == 0:
            if c == RED:
                redl += 1
            else:
                bluel += 1
        if v == 0:
            if c == RED:
                redc += 1
            else:
                bluec += 1
        else:
            u = parent[v]
            if colour[u] != c:
                if c == RED:
                    redc += 1
                else:
                    bluec += 1
            elif in_root[u] == 1:
                in_root[v] = 1
        if in_root[v] == 1:
            root_size += 1
    out[0] = red
    out[1] = n - red
    out[2] = redc
    out[3] = bluec
    out[4] = redl
    out[5] = bluel
    out[6] = root_size
    out[7] = colour[0]


def stat_vector(tree: ColouredTree) -> StatVector:
    out = np.empty(8, dtype=np.int64)
    _stat_pass(tree.parent, tree.outdeg, tree.colour, out)
    return StatVector(*(int(x) for x in out))


def colour_counts(tree: ColouredTree) -> tuple[int, int]:
    red = int((tree.colour == RED).sum())
    return red, tree.n - red


def cluster_counts(tree: ColouredTree) -> tuple[int, int]:
    """Counts of maximal monochromatic subtrees per colour.

    A cluster is rooted where a vertex differs in colour from its parent
    (or at the tree root), so counting cluster roots counts clusters.
    """
    roots = np.empty(tree.n, dtype=bool)
    roots[0] = True
    if tree.n > 1:
        roots[1:] = tree.colour[1:] != tree.colour[tree.parent[1:]]
    red = int((roots & (tree.colour == RED)).sum())
    return red, int(roots.sum()) - red


def leaf_counts(tree: ColouredTree) -> tuple[int, int]:
    leaf = tree.outdeg == 0
    red = int((leaf & (tree.colour == RED)).sum())
    return red, int(leaf.sum()) - red


def root_cluster_size(tree: ColouredTree) -> int:
    return int((percolation_forest(tree) == 0).sum())


# ---------------------------------------------------------------------------
# coloured fringe patterns
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ColouredPattern:
    """A small rooted coloured tree used as a fringe-census target."""

    parent: np.ndarray
    colour: np.ndarray

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.colour = np.asarray(self.colour, dtype=np.uint8)
        if self.size > K_MAX:
            raise ValueError(f"pattern size {self.size} exceeds K_MAX={K_MAX}")
        if self.size > 1 and not np.all(
            self.parent[1:] < np.arange(1, self.size)
        ):
            raise ValueError("pattern parents must satisfy parent[v] < v")

    @classmethod
    def of(cls, parents, colours) -> "ColouredPattern":
        return cls(np.asarray(parents), np.asarray(colours))

    @property
    def size(self) -> int:
        return self.parent.shape[0]

    @property
    def root_colour(self) -> int:
        return int(self.colour[0])

    def code(self) -> bytes:
        return canonical_code(self)

    def flipped(self) -> "ColouredPattern":
        return ColouredPattern(self.parent.copy(), 1 - self.colour)


def _children_lists(parent: np.ndarray, n: int) -> list[list[int]]:
    ch: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        ch[parent[v]].append(v)
    return ch


def canonical_code(pattern) -> bytes:
    """Canonical byte string of a coloured rooted tree.

    Equal codes iff the trees are isomorphic by a root- and
    colour-preserving isomorphism.  Child order never matters: the code of
    a vertex is its colour byte followed by the sorted codes of its
    children, wrapped in parentheses.
    """
    if isinstance(pattern, ColouredPattern):
        parent, colour = pattern.parent, pattern.colour
    else:
        parent, colour = pattern
        parent = np.asarray(parent, dtype=np.int64)
        colour = np.asarray(colour, dtype=np.uint8)
    n = parent.shape[0]
    if n > K_MAX:
        raise ValueError(f"size {n} exceeds K_MAX={K_MAX}")
    children = _children_lists(parent, n)
    codes: list[bytes | None] = [None] * n
    for v in range(n - 1, -1, -1):  # children carry larger indices
        kid = sorted(codes[c] for c in children[v])
        codes[v] = (b"r(" if colour[v] == RED else b"b(") + b"".join(kid) + b")"
    return codes[0]


def all_patterns(max_size: int) -> list[ColouredPattern]:
    """Every coloured pattern of size 1..max_size, deduplicated up to
    isomorphism and sorted by (size, code).  Downward closed by
    construction."""
    if max_size > K_MAX:
        raise ValueError(f"max_size exceeds K_MAX={K_MAX}")
    seen: dict[bytes, ColouredPattern] = {}

    def rec(parents: list[int], colours: list[int]):
        pat = ColouredPattern.of(parents, colours)
        key = pat.code()
        if key in seen:
            return
        seen[key] = pat
        k = len(parents)
        if k == max_size:
            return
        for u in range(k):
            for c in (RED, BLUE):
                rec(parents + [u], colours + [c])

    rec([0], [RED])
    rec([0], [BLUE])
    return sorted(seen.values(), key=lambda q: (q.size, q.code()))


@njit(cache=True, nogil=True)
def _subtree_sizes(parent, sizes):
    n = parent.shape[0]
    for v in range(n):
        sizes[v] = 1
    for v in range(n - 1, 0, -1):
        sizes[parent[v]] += sizes[v]


def subtree_sizes(tree: ColouredTree) -> np.ndarray:
    sizes = np.empty(tree.n, dtype=np.int64)
    _subtree_sizes(tree.parent, sizes)
    return sizes


class _Interner:
    """Maps (colour, sorted child ids) to small ints; ids are canonical
    within one interner, so two subtrees get the same id iff isomorphic."""

    def __init__(self):
        self.table: dict[tuple, int] = {}

    def key_id(self, colour: int, child_ids: list[int]) -> int:
        key = (colour, tuple(sorted(child_ids)))
        got = self.table.get(key)
        if got is None:
            got = len(self.table)
            self.table[key] = got
        return got

    def pattern_id(self, pattern: ColouredPattern) -> int:
        n = pattern.size
        children = _children_lists(pattern.parent, n)
        ids = [0] * n
        for v in range(n - 1, -1, -1):
            ids[v] = self.key_id(int(pattern.colour[v]), [ids[c] for c in children[v]])
        return ids[0]


def _vertex_pattern_ids(tree: ColouredTree, max_size: int, interner: _Interner):
    """Per-vertex canonical id of the fringe subtree, or -1 when its size
    exceeds max_size.  Returns (ids, sizes)."""
    n = tree.n
    sizes = subtree_sizes(tree)
    parent = tree.parent
    colour = tree.colour
    small = sizes <= max_size
    kids: dict[int, list[int]] = {}
    ids = np.full(n, -1, dtype=np.int64)
    key_id = interner.key_id
    for v in range(n - 1, -1, -1):
        if not small[v]:
            continue
        ids[v] = key_id(int(colour[v]), kids.pop(v, []))
        if v > 0:
            u = parent[v]
            if small[u]:
                kids.setdefault(int(u), []).append(int(ids[v]))
    return ids, sizes


def fringe_census(tree: ColouredTree, patterns: list[ColouredPattern]) -> np.ndarray:
    """Number of vertices whose fringe subtree (all descendants, inherited
    colours) is isomorphic to each pattern."""
    if not patterns:
        return np.zeros(0, dtype=np.int64)
    max_size = max(p.size for p in patterns)
    if max_size > K_MAX:
        raise ValueError(f"pattern size exceeds K_MAX={K_MAX}")
    interner = _Interner()
    pat_ids = [interner.pattern_id(p) for p in patterns]
    ids, _ = _vertex_pattern_ids(tree, max_size, interner)
    counts = np.bincount(ids[ids >= 0], minlength=len(interner.table))
    return np.array([counts[i] for i in pat_ids], dtype=np.int64)


def urn_census(
    tree: ColouredTree, patterns: list[ColouredPattern], alpha: float
) -> tuple[np.ndarray, float, float]:
    """Urn-ball representation of a tree for a downward-closed pattern set.

    A vertex is represented by a ball of pattern type i when its fringe
    subtree matches pattern i and it is not contained in any larger
    matching fringe.  All remaining vertices are represented by
    alpha*outdeg+1 balls of a special type per colour.  Returns
    (ball counts per pattern, special red mass, special blue mass).
    """
    max_size = max(p.size for p in patterns)
    interner = _Interner()
    pat_ids = [interner.pattern_id(p) for p in patterns]
    id_set = set(pat_ids)
    ids, sizes = _vertex_pattern_ids(tree, max_size, interner)
    n = tree.n
    parent = tree.parent
    in_s = np.zeros(n, dtype=bool)
    for v in range(n):
        if ids[v] >= 0 and int(ids[v]) in id_set:
            in_s[v] = True
    counts = np.zeros(len(patterns), dtype=np.int64)
    index_of = {pid: k for k, pid in enumerate(pat_ids)}
    covered = np.zeros(n, dtype=bool)
    for v in range(n):
        if not in_s[v]:
            continue
        # maximal iff no proper ancestor also matches a pattern in S;
        # ancestors with subtree size > max_size cannot match
        u = parent[v]
        maximal = True
        while u >= 0 and sizes[u] <= max_size:
            if in_s[u]:
                maximal = False
                break
            u = parent[u]
        if maximal:
            counts[index_of[int(ids[v])]] += 1
            covered[v] = True
    # vertices inside a maximal matching fringe are covered too
    for v in range(1, n):
        if covered[parent[v]]:
            covered[v] = True
    w = alpha * tree.outdeg + 1.0
    free = ~covered
    red_mass = float(w[free & (tree.colour == RED)].sum())
    blue_mass = float(w[free & (tree.colour == BLUE)].sum())
    return counts, red_mass, blue_mass
