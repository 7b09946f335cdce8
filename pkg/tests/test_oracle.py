"""Exact small-n machinery: weighted recursion, closed forms, enumeration,
and the coefficient-series moments."""

import math

import numpy as np
import pytest

from pact.oracle import (
    all_trees_series,
    build_weight_table,
    closed_form_pmf_alpha0,
    enumerate_small,
    exact_root_cluster_pmf,
    phi_factory,
    series_moments,
    singularity_scale,
)
from pact.stats import ColouredPattern
from pact.tree import BLUE, RED, Model

MODELS = [
    Model.preferential(0.0, 0.6),
    Model.preferential(1.0, 0.6),
    Model.preferential(0.5, 0.25),
    Model.dary(2, 0.6),
    Model.dary(3, 0.3),
]


class TestPhi:
    def test_alpha0(self):
        phi = phi_factory(Model.preferential(0.0, 0.5))
        assert [phi(k) for k in range(4)] == [1.0, 1.0, 1.0, 1.0]

    def test_alpha1_is_factorial(self):
        phi = phi_factory(Model.preferential(1.0, 0.5))
        assert [phi(k) for k in range(5)] == pytest.approx([1, 1, 2, 6, 24])

    def test_dary_truncates(self):
        phi = phi_factory(Model.dary(3, 0.5))
        assert [phi(k) for k in range(5)] == [1, 3, 6, 6, 0]


class TestWeightTable:
    @pytest.mark.parametrize("model", MODELS)
    def test_row_sums_match_totals(self, model):
        table = build_weight_table(model, 12)
        assert table.row_sum_error() <= 1e-12

    def test_totals_match_closed_forms(self):
        # d = 2: b_n / n! = 1; alpha = 0: b_n / n! = 1/n
        b2 = all_trees_series(Model.dary(2, 0.3), 30)
        assert np.allclose(b2[1:], 1.0)
        b0 = all_trees_series(Model.preferential(0.0, 0.3), 30)
        assert np.allclose(b0[1:], 1.0 / np.arange(1, 31))
        # general: the recursion reproduces the closed form coefficients
        for model in MODELS:
            table = build_weight_table(model, 10)
            closed = all_trees_series(model, 10)
            assert np.allclose(table.r.sum(axis=1)[1:], closed[1:], rtol=1e-12)

    def test_scale(self):
        assert singularity_scale(Model.preferential(1.0, 0.5)) == 2.0
        assert singularity_scale(Model.dary(4, 0.5)) == 3.0


class TestExactPmf:
    @pytest.mark.parametrize("model", MODELS)
    def test_single_edge(self, model):
        pmf = exact_root_cluster_pmf(model, 2)
        assert pmf[0] == pytest.approx(1 - model.p)
        assert pmf[1] == pytest.approx(model.p)

    def test_three_vertices_alpha0(self):
        p = 0.3
        pmf = exact_root_cluster_pmf(Model.preferential(0.0, p), 3)
        assert pmf[1] == pytest.approx(1.5 * p * (1 - p))

    @pytest.mark.parametrize("p", [0.3, 0.6, 0.9])
    def test_matches_closed_form_alpha0(self, p):
        model = Model.preferential(0.0, p)
        for n in range(2, 13):
            a = exact_root_cluster_pmf(model, n)
            b = closed_form_pmf_alpha0(n, p)
            assert np.abs(a - b).max() <= 1e-12

    def test_pmf_sums_to_one(self):
        for model in MODELS:
            assert exact_root_cluster_pmf(model, 10).sum() == pytest.approx(1.0, abs=1e-12)

    def test_cap_enforced(self):
        with pytest.raises(ValueError):
            exact_root_cluster_pmf(Model.preferential(1.0, 0.5), 13)
        with pytest.raises(ValueError):
            exact_root_cluster_pmf(Model.preferential(0.0, 0.5), 41)
        # explicit override allows more
        pmf = exact_root_cluster_pmf(Model.preferential(1.0, 0.5), 15, n_max=15)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


class TestMonotoneCoupling:
    # |C_n| is nondecreasing along the growth path, so its exact CDF must
    # be pointwise non-increasing in n -- a joint property of all tables
    @pytest.mark.parametrize("model", MODELS)
    def test_cdf_decreases_with_n(self, model):
        prev = None
        for n in range(2, 12):
            pmf = exact_root_cluster_pmf(model, n)
            cdf = np.cumsum(pmf)
            if prev is not None:
                assert np.all(cdf[: prev.shape[0]] <= prev + 1e-12)
            prev = cdf


class TestClosedFormAlpha0:
    def test_single_edge(self):
        assert closed_form_pmf_alpha0(2, 0.4)[1] == pytest.approx(0.4)

    def test_normalisation(self):
        for p in (0.2, 0.5, 0.8):
            for n in (3, 7, 20):
                assert closed_form_pmf_alpha0(n, p).sum() == pytest.approx(1.0, abs=1e-12)

    def test_p_one_point_mass(self):
        pmf = closed_form_pmf_alpha0(9, 1.0)
        assert pmf[-1] == pytest.approx(1.0)


class TestSeriesMoments:
    @pytest.mark.parametrize("model", MODELS)
    def test_first_moment_vs_pmf(self, model):
        mom = series_moments(model, 1, 12)
        for n in range(2, 13):
            pmf = exact_root_cluster_pmf(model, n)
            assert mom[n] == pytest.approx((pmf * np.arange(1, n + 1)).sum(), rel=1e-10)

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_falling_factorials_vs_pmf(self, k):
        model = Model.preferential(1.0, 0.4)
        mom = series_moments(model, k, 12)
        for n in range(2, 13):
            pmf = exact_root_cluster_pmf(model, n)
            ks = np.arange(1, n + 1, dtype=float)
            ff = ks.copy()
            for i in range(1, k):
                ff *= ks - i
            ref = (pmf * ff).sum()
            assert mom[n] == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_zero_order(self):
        mom = series_moments(Model.preferential(0.0, 0.5), 0, 5)
        assert np.allclose(mom[1:], 1.0)

    def test_dary_critical_log_growth(self):
        # E|C_n| / ln n -> 1/(d-1); fitted slope within 10%
        mom = series_moments(Model.dary(2, 0.5), 1, 100_000)
        slope = (mom[100_000] - mom[1000]) / (math.log(100_000) - math.log(1000))
        assert abs(slope - 1.0) <= 0.10

    @pytest.mark.slow
    def test_alpha1_limit(self):
        p = 0.7
        mom = series_moments(Model.preferential(1.0, p), 1, 1_000_000)
        val = mom[1_000_000] / 1_000_000 ** ((p + 1) / 2)
        limit = 2 * math.sqrt(math.pi) / ((p + 1) * math.gamma(p / 2))
        assert abs(val - limit) / limit <= 0.02

    def test_order_guard(self):
        with pytest.raises(ValueError):
            series_moments(Model.preferential(0.0, 0.5), 5, 10)


class TestEnumeration:
    def test_two_vertices(self):
        enum = enumerate_small(Model.preferential(0.0, 0.3), 2)
        assert sorted(enum.code_probs.values()) == pytest.approx([0.3, 0.7])

    def test_three_vertex_shapes_alpha0(self):
        enum = enumerate_small(Model.preferential(0.0, 0.4), 3)
        shape_mass = {}
        for code, w in enum.code_probs.items():
            key = code.replace(b"b", b"r")
            shape_mass[key] = shape_mass.get(key, 0.0) + w
        assert sorted(shape_mass.values()) == pytest.approx([0.5, 0.5])

    @pytest.mark.parametrize("model", MODELS)
    def test_marginal_matches_recursion(self, model):
        for n in range(2, 8):
            enum = enumerate_small(model, n)
            exact = exact_root_cluster_pmf(model, n)
            assert np.abs(enum.root_cluster_pmf[1 : n + 1] - exact).max() <= 1e-12

    def test_mass_one(self):
        enum = enumerate_small(Model.dary(2, 0.35), 6)
        assert sum(enum.code_probs.values()) == pytest.approx(1.0, abs=1e-12)
        assert sum(enum.stat_probs.values()) == pytest.approx(1.0, abs=1e-12)

    @staticmethod
    def _max_outdegree(code: bytes) -> int:
        # grammar: vertex := colour '(' vertex* ')'
        stack, best = [], 0
        for ch in code.decode():
            if ch in "rb":
                if stack:
                    stack[-1] += 1
                    best = max(best, stack[-1])
            elif ch == "(":
                stack.append(0)
            else:
                stack.pop()
        return best

    def test_dary_respects_cap(self):
        # no shape with outdegree above d receives mass
        enum = enumerate_small(Model.dary(2, 0.5), 5)
        assert max(self._max_outdegree(c) for c in enum.code_probs) <= 2

    def test_pattern_probability_singles(self):
        enum = enumerate_small(Model.preferential(1.0, 0.8), 1)
        assert enum.pattern_probability(ColouredPattern.of([0], [RED])) == pytest.approx(0.5)
        assert enum.pattern_probability(ColouredPattern.of([0], [BLUE])) == pytest.approx(0.5)

    def test_pattern_probability_two_path(self):
        p = 0.35
        enum = enumerate_small(Model.preferential(0.0, p), 2)
        assert enum.pattern_probability(
            ColouredPattern.of([0, 0], [RED, BLUE])
        ) == pytest.approx(0.5 * (1 - p))
        assert enum.pattern_probability(
            ColouredPattern.of([0, 0], [BLUE, RED])
        ) == pytest.approx(0.5 * (1 - p))

    def test_uniform_codes_symmetry(self):
        enum = enumerate_small(Model.preferential(0.5, 0.3), 4)
        uni = enum.uniform_code_probs()
        assert sum(uni.values()) == pytest.approx(1.0, abs=1e-12)
        red_mass = sum(w for c, w in uni.items() if c.startswith(b"r"))
        assert red_mass == pytest.approx(0.5, abs=1e-12)
        # the red-root law equals the colour mirror of the blue-root law
        assert sorted(enum.code_probs.values()) == pytest.approx(
            sorted(enum.flip_probs.values())
        )
        assert {c[0:1] for c in enum.code_probs} == {b"r"}
        assert {c[0:1] for c in enum.flip_probs} == {b"b"}

    def test_cap(self):
        with pytest.raises(ValueError):
            enumerate_small(Model.preferential(0.0, 0.5), 8)
