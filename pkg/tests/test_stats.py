"""Per-tree statistics against hand-computed fixtures and exact laws."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pact import BLUE, RED, ColouredTree, Model, RngStream, grow_coloured_tree
from pact._mc import batch_stats, empirical_stat_distribution, tv_distance
from pact.oracle import enumerate_small
from pact.stats import (
    ColouredPattern,
    all_patterns,
    canonical_code,
    cluster_counts,
    colour_counts,
    fringe_census,
    leaf_counts,
    root_cluster_size,
    subtree_sizes,
    urn_census,
)

from test_tree import FIXTURE_COLOUR, FIXTURE_PARENT

# coloured pattern set from the worked fringe example (sizes 1..3)
T1 = ColouredPattern.of([0], [RED])
T2 = ColouredPattern.of([0], [BLUE])
T3 = ColouredPattern.of([0, 0], [RED, BLUE])
T4 = ColouredPattern.of([0, 0], [BLUE, RED])
T5 = ColouredPattern.of([0, 0, 0], [RED, BLUE, BLUE])
T6 = ColouredPattern.of([0, 0, 0], [BLUE, RED, RED])
WORKED_SET = [T1, T2, T3, T4, T5, T6]


@pytest.fixture
def fixture_tree():
    return ColouredTree.from_parents(FIXTURE_PARENT, FIXTURE_COLOUR)


class TestCounts:
    def test_all_red(self):
        tree = grow_coloured_tree(Model.preferential(0.0, 1.0), 40, RngStream(4))
        red, blue = colour_counts(tree)
        assert {red, blue} == {40, 0}

    def test_fixture_colour_counts(self, fixture_tree):
        assert colour_counts(fixture_tree) == (13, 10)

    def test_fixture_cluster_counts(self, fixture_tree):
        assert cluster_counts(fixture_tree) == (7, 5)

    def test_monochromatic_clusters(self):
        tree = grow_coloured_tree(Model.preferential(0.0, 1.0), 40, RngStream(4))
        rc, bc = cluster_counts(tree)
        assert rc + bc == 1 and rc * bc == 0

    def test_cluster_total_is_binomial(self):
        # total clusters = 1 + Bin(n-1, 1-p)
        n, reps, p = 3000, 2000, 0.35
        stats = batch_stats(Model.preferential(1.0, p), n, reps, seed=8)
        total = (stats[:, 2] + stats[:, 3]).astype(float)
        mean_t = 1 + (n - 1) * (1 - p)
        se = math.sqrt((n - 1) * p * (1 - p) / reps)
        assert abs(total.mean() - mean_t) <= 3.5 * se

    def test_single_vertex_leaf(self):
        tree = ColouredTree.from_parents([-1], [BLUE])
        assert leaf_counts(tree) == (0, 1)

    @pytest.mark.parametrize(
        "model,frac",
        [(Model.preferential(0.0, 0.4), 0.25), (Model.dary(2, 0.4), 1.0 / 6.0)],
    )
    def test_leaf_fraction(self, model, frac):
        n, reps = 10_000, 400
        stats = batch_stats(model, n, reps, seed=17)
        lv = (stats[:, 4] + stats[:, 5]).astype(float) / n
        se = lv.std(ddof=1) / math.sqrt(reps)
        assert abs(lv.mean() - 2 * frac) <= 4 * se

    def test_centred_vertex_mean(self):
        # sqrt(n)-scaled red-count deviation has mean zero
        n, reps = 10_000, 2000
        stats = batch_stats(Model.preferential(0.0, 0.6), n, reps, seed=23)
        dev = (stats[:, 0] - n / 2) / math.sqrt(n)
        se = dev.std(ddof=1) / math.sqrt(reps)
        assert abs(dev.mean()) <= 3.5 * se


class TestRootCluster:
    def test_p_one_full(self):
        tree = grow_coloured_tree(Model.preferential(0.0, 1.0), 100, RngStream(4))
        assert root_cluster_size(tree) == 100

    def test_fixture(self, fixture_tree):
        assert root_cluster_size(fixture_tree) == 7

    def test_two_vertices(self):
        p = 0.7
        hits = 0
        reps = 20_000
        stats = batch_stats(Model.preferential(1.0, p), 2, reps, seed=31)
        hits = (stats[:, 6] == 2).sum()
        assert abs(hits / reps - p) <= 3.5 * math.sqrt(p * (1 - p) / reps)

    def test_three_vertices_alpha0(self):
        # P(size = 2) = (3/2) p (1-p) by enumeration over both shapes
        p = 0.45
        reps = 50_000
        stats = batch_stats(Model.preferential(0.0, p), 3, reps, seed=32)
        frac = (stats[:, 6] == 2).mean()
        target = 1.5 * p * (1 - p)
        assert abs(frac - target) <= 3.5 * math.sqrt(target * (1 - target) / reps)

    def test_bfs_cross_check(self):
        # independent reachability check over monochromatic edges
        tree = grow_coloured_tree(Model.preferential(1.0, 0.6), 500, RngStream(33))
        reach = {0}
        children = [[] for _ in range(tree.n)]
        for v in range(1, tree.n):
            children[tree.parent[v]].append(v)
        stack = [0]
        while stack:
            u = stack.pop()
            for c in children[u]:
                if tree.colour[c] == tree.colour[u]:
                    reach.add(c)
                    stack.append(c)
        assert root_cluster_size(tree) == len(reach)


class TestCanonicalCode:
    def test_colour_distinguishes(self):
        assert T1.code() != T2.code()

    def test_child_order_irrelevant(self):
        a = ColouredPattern.of([0, 0, 0], [RED, RED, BLUE])
        b = ColouredPattern.of([0, 0, 0], [RED, BLUE, RED])
        assert a.code() == b.code()

    def test_root_colour_in_path(self):
        assert T3.code() != T4.code()

    def test_size_cap(self):
        with pytest.raises(ValueError):
            canonical_code((np.arange(-1, 9), np.zeros(10, dtype=np.uint8)))

    @given(st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_flip_is_an_involution(self, seed):
        g = RngStream(seed).generator()
        size = int(g.integers(1, 8))
        parents = [0] + [int(g.integers(0, v)) for v in range(1, size)]
        colours = [int(g.integers(0, 2)) for _ in range(size)]
        pat = ColouredPattern.of(parents, colours)
        # mirror twice = identity
        assert pat.flipped().flipped().code() == pat.code()


class TestFringeCensus:
    def test_singles_equal_leaf_counts(self, fixture_tree):
        census = fringe_census(fixture_tree, [T1, T2])
        assert tuple(census) == leaf_counts(fixture_tree)

    def test_worked_example_counts(self, fixture_tree):
        assert list(fringe_census(fixture_tree, WORKED_SET)) == [7, 5, 1, 1, 1, 2]

    def test_worked_example_ball_representation(self, fixture_tree):
        counts, star_r, star_b = urn_census(fixture_tree, WORKED_SET, alpha=1.0)
        assert list(counts) == [2, 2, 1, 1, 1, 2]
        # remaining vertices: four red of outdegrees (3,1,3,1), two blue of
        # outdegree 3 -> masses 8 alpha + 4 and 6 alpha + 2
        assert star_r == pytest.approx(8 * 1.0 + 4)
        assert star_b == pytest.approx(6 * 1.0 + 2)

    def test_single_vertex_patterns_sum_to_leaves(self):
        tree = grow_coloured_tree(Model.preferential(1.0, 0.3), 1000, RngStream(41))
        census = fringe_census(tree, [T1, T2])
        assert census.sum() == sum(leaf_counts(tree))

    def test_census_matches_density(self):
        # light empirical check of the per-vertex densities
        from pact.theory import fringe_mu

        model = Model.preferential(0.0, 0.55)
        pats = all_patterns(2)
        mu = fringe_mu(pats, model)
        n, reps = 4000, 300
        counts = np.zeros((reps, len(pats)))
        g = RngStream(43).generator()
        for r in range(reps):
            counts[r] = fringe_census(grow_coloured_tree(model, n, g), pats)
        dens = counts / n
        for i in range(len(pats)):
            se = dens[:, i].std(ddof=1) / math.sqrt(reps)
            assert abs(dens[:, i].mean() - mu[i]) <= 4.5 * se

    def test_subtree_sizes(self, fixture_tree):
        sizes = subtree_sizes(fixture_tree)
        assert sizes[0] == fixture_tree.n
        assert sizes[15] == 3 and sizes[12] == 3


def test_all_patterns_counts():
    assert len(all_patterns(1)) == 2
    assert len(all_patterns(2)) == 6
    # size 3: 8 coloured 2-paths + 6 coloured cherries on top of sizes 1-2
    assert len(all_patterns(3)) == 20


@pytest.mark.slow
@pytest.mark.parametrize(
    "model,n,reps",
    [
        (Model.dary(2, 0.3), 5, 2_000_000),
        (Model.preferential(1.0, 0.3), 6, 3_000_000),
    ],
)
def test_stat_vector_joint_law_matches_enumeration(model, n, reps):
    emp = empirical_stat_distribution(model, n, reps, seed=61)
    exact = enumerate_small(model, n).stat_probs
    assert tv_distance(emp, exact) <= 0.01
