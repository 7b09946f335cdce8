"""Growth and colouring of random linear preferential attachment trees.

A tree on n vertices is held as parallel numpy arrays indexed by insertion
order (the root is vertex 0, labels increase along every root-to-leaf path):

    parent : int64 [n]   parent[v] for v >= 1; parent[0] = -1
    outdeg : int64 [n]   number of children
    colour : uint8 [n]   RED (0) or BLUE (1)

Growth rule: a new vertex attaches to v with probability proportional to
alpha*outdeg(v) + 1.  Two O(1)-per-insertion samplers are used:

* alpha >= 0 -- split the weight alpha*outdeg(v) + 1 into "uniform vertex"
  (total mass n) and "parent endpoint of a uniform edge" (total mass
  alpha*(n-1)).  The parent endpoint of edge j is parent[j+1], so the
  parent array doubles as the edge table.
* alpha = -1/d -- rejection: draw a uniform vertex, accept with probability
  (d - outdeg)/d.  Acceptance rate is at least 1 - 1/d.

Colours: the root is RED or BLUE with equal probability; every later vertex
copies its parent's colour with probability p, else takes the other colour.

The hot loops are numba kernels taking a numpy Generator; replicates get
independent streams from a counter-based Philox generator keyed by
(seed, stream_id), so results are reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

RED = 0
BLUE = 1


@dataclass(frozen=True)
class Model:
    """Attachment parameter and colour persistence probability.

    alpha is the resolved attachment parameter: any real >= 0, or -1/d in
    d-ary mode (d >= 2), in which case ``d`` is set.  Use the
    ``preferential`` / ``dary`` constructors rather than instantiating
    directly.
    """

    alpha: float
    p: float
    d: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.d is None:
            if self.alpha < 0:
                raise ValueError(
                    f"alpha must be >= 0 outside d-ary mode, got {self.alpha}"
                )
        else:
            if not (isinstance(self.d, int) and self.d >= 2):
                raise ValueError(f"d must be an integer >= 2, got {self.d}")
            if self.alpha != -1.0 / self.d:
                raise ValueError("d-ary mode requires alpha == -1/d")

    @classmethod
    def preferential(cls, alpha: float, p: float) -> "Model":
        return cls(alpha=float(alpha), p=float(p))

    @classmethod
    def dary(cls, d: int, p: float) -> "Model":
        return cls(alpha=-1.0 / d, p=float(p), d=int(d))

    @property
    def is_dary(self) -> bool:
        return self.d is not None

    def vertex_weight(self, outdeg: int) -> float:
        return self.alpha * outdeg + 1.0

    def total_weight(self, n: int) -> float:
        return n + self.alpha * (n - 1)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream: (seed, stream_id) -> Philox generator.

    Streams with distinct stream_id are statistically independent, and the
    same pair always yields the same draw sequence.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class ColouredTree:
    parent: np.ndarray
    outdeg: np.ndarray
    colour: np.ndarray

    @property
    def n(self) -> int:
        return self.parent.shape[0]

    @classmethod
    def from_parents(cls, parents, colours) -> "ColouredTree":
        """Build a tree from explicit parent/colour sequences (fixtures)."""
        parent = np.asarray(parents, dtype=np.int64)
        colour = np.asarray(colours, dtype=np.uint8)
        n = parent.shape[0]
        if colour.shape[0] != n:
            raise ValueError("parent and colour must have equal length")
        parent = parent.copy()
        parent[0] = -1
        if n > 1 and not np.all(parent[1:] < np.arange(1, n)):
            raise ValueError("parent[v] < v required for v >= 1")
        outdeg = np.zeros(n, dtype=np.int64)
        if n > 1:
            np.add.at(outdeg, parent[1:], 1)
        return cls(parent=parent, outdeg=outdeg, colour=colour)

    def validate(self, model: Model | None = None) -> None:
        """Assert the structural invariants; raises AssertionError."""
        n = self.n
        assert self.parent[0] == -1
        if n > 1:
            assert np.all(self.parent[1:] >= 0)
            assert np.all(self.parent[1:] < np.arange(1, n))
        assert int(self.outdeg.sum()) == n - 1
        if model is not None:
            total = model.total_weight(n)
            assert total > 0
            recomputed = model.alpha * self.outdeg.sum() + n
            assert abs(recomputed - total) <= 1e-9 * max(1.0, abs(total))
            if model.is_dary:
                assert int(self.outdeg.max(initial=0)) <= model.d

    def red_blue_weights(self, model: Model) -> tuple[float, float]:
        """Total vertex weight alpha*outdeg+1 per colour (urn coupling)."""
        w = model.alpha * self.outdeg + 1.0
        red = float(w[self.colour == RED].sum())
        return red, float(w.sum()) - red


@njit(cache=True, nogil=True)
def _grow_linear(n, alpha, p, parent, outdeg, colour, rng):
    parent[0] = -1
    for v in range(n):
        outdeg[v] = 0
    colour[0] = RED if rng.random() < 0.5 else BLUE
    for v in range(1, n):
        total = v + alpha * (v - 1)
        r = rng.random() * total
        if r < v:
            u = int(r)
            if u >= v:
                u = v - 1
        else:
            j = int((r - v) / alpha)
            if j >= v - 1:
                j = v - 2
            u = parent[j + 1]
        parent[v] = u
        outdeg[u] += 1
        if rng.random() < p:
            colour[v] = colour[u]
        else:
            colour[v] = 1 - colour[u]


@njit(cache=True, nogil=True)
def _grow_dary(n, d, p, parent, outdeg, colour, rng):
    parent[0] = -1
    for v in range(n):
        outdeg[v] = 0
    colour[0] = RED if rng.random() < 0.5 else BLUE
    for v in range(1, n):
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


@njit(cache=True, nogil=True)
def _cluster_labels(parent, colour, labels):
    labels[0] = 0
    for v in range(1, parent.shape[0]):
        if colour[v] == colour[parent[v]]:
            labels[v] = labels[parent[v]]
        else:
            labels[v] = v


def _resolve_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_parent(tree: ColouredTree, model: Model, rng) -> int:
    """Draw the parent of a hypothetical next vertex.

    Returns v with probability (alpha*outdeg[v] + 1) / (n + alpha*(n-1));
    in d-ary mode the weight is proportional to d - outdeg[v].
    """
    g = _resolve_generator(rng)
    n = tree.n
    if model.is_dary:
        d = model.d
        while True:
            u = min(int(g.random() * n), n - 1)
            if g.random() * d < d - tree.outdeg[u]:
                return u
    alpha = model.alpha
    r = g.random() * (n + alpha * (n - 1))
    if r < n:
        return min(int(r), n - 1)
    j = min(int((r - n) / alpha), n - 2)
    return int(tree.parent[j + 1])


def grow_coloured_tree(model: Model, n: int, rng) -> ColouredTree:
    """Grow a coloured tree of size n (root colour uniform, persistence p)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parent = np.empty(n, dtype=np.int64)
    outdeg = np.empty(n, dtype=np.int64)
    colour = np.empty(n, dtype=np.uint8)
    g = _resolve_generator(rng)
    if model.is_dary:
        _grow_dary(n, model.d, model.p, parent, outdeg, colour, g)
    else:
        _grow_linear(n, model.alpha, model.p, parent, outdeg, colour, g)
    return ColouredTree(parent=parent, outdeg=outdeg, colour=colour)


def percolation_forest(tree: ColouredTree) -> np.ndarray:
    """Cluster labels after removing bichromatic edges.

    Two vertices share a label iff they are connected by monochromatic
    edges.  The label of a cluster is the index of its highest vertex
    (its root), so label 0 marks the root cluster.
    """
    labels = np.empty(tree.n, dtype=np.int64)
    _cluster_labels(tree.parent, tree.colour, labels)
    return labels
