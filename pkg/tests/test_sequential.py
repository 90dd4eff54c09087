import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import canonical_crossings
from urnbandit.errors import PlanningError, SpecError
from urnbandit.sequential import (Decision, MonitorState, SpendingFunction, compute_boundaries,
                                  crossing_probabilities, inflation_factor,
                                  info_fraction_diagnostics, information_target, monitor_step,
                                  plan_design)

Z05 = stats.norm.isf(0.05)


class TestSpending:
    @pytest.mark.parametrize("family", ["pocock", "obf", "power", "hsd"])
    def test_normalisation(self, family):
        f = SpendingFunction(family, 0.05)
        assert f(1.0) == pytest.approx(0.05, abs=1e-15)
        assert f(0.0) == pytest.approx(0.0, abs=1e-15)

    def test_obf_value(self):
        assert SpendingFunction("obf")(0.5) == pytest.approx(1 - stats.norm.cdf(Z05 / math.sqrt(0.5)))
        assert SpendingFunction("obf")(0.5) == pytest.approx(0.0100, abs=5e-5)

    def test_linear_power(self):
        assert SpendingFunction("power", 0.05, 1.0)(0.3) == pytest.approx(0.015)

    @settings(max_examples=50, deadline=None)
    @given(family=st.sampled_from(["pocock", "obf", "power", "hsd"]),
           a=st.floats(0, 1), b=st.floats(0, 1))
    def test_monotone(self, family, a, b):
        f = SpendingFunction(family, 0.05)
        lo, hi = sorted((a, b))
        assert f(lo) <= f(hi) + 1e-15

    def test_domain(self):
        with pytest.raises(SpecError):
            SpendingFunction("obf")(1.2)
        with pytest.raises(SpecError):
            SpendingFunction("lan")
        with pytest.raises(SpecError):
            SpendingFunction("hsd", 0.05, 0.0)


class TestInformationTarget:
    def test_value(self):
        v = information_target(0.05, 0.1, 0.2)
        assert v == pytest.approx(((1.64485 + 1.28155) / 0.2) ** 2, rel=1e-4)
        assert v == pytest.approx(214.06, abs=0.05)

    def test_quadruples_when_halved(self):
        assert information_target(0.05, 0.1, 0.1) == pytest.approx(4 * information_target(0.05, 0.1, 0.2))

    def test_zero_effect(self):
        with pytest.raises(PlanningError):
            information_target(0.05, 0.1, 0.0)


class TestBoundaries:
    def test_single_look(self):
        table = compute_boundaries([1.0], SpendingFunction("obf", 0.05))
        assert table.boundaries[0] == pytest.approx(Z05, abs=1e-6)

    def test_two_looks_against_monte_carlo(self):
        table = compute_boundaries([0.5, 1.0], SpendingFunction("obf", 0.05))
        assert table.boundaries[0] == pytest.approx(stats.norm.isf(table.increments[0]), abs=1e-6)
        assert table.boundaries[0] == pytest.approx(2.3263, abs=5e-4)
        # oracle: c2 such that P(Z1 <= c1, Z2 > c2) equals the second increment
        g = np.random.default_rng(2024)
        z1 = g.standard_normal(10_000_000)
        z2 = math.sqrt(0.5) * z1 + math.sqrt(0.5) * g.standard_normal(10_000_000)
        survivors = np.sort(z2[z1 <= table.boundaries[0]])
        k = int(round(table.increments[1] * len(z1)))
        assert table.boundaries[1] == pytest.approx(survivors[-k], abs=0.01)

    @pytest.mark.parametrize("family", ["pocock", "obf", "power", "hsd"])
    def test_exit_probabilities_sum_to_alpha(self, family):
        t = [0.2, 0.35, 0.6, 0.8, 1.0]
        table = compute_boundaries(t, SpendingFunction(family, 0.025))
        assert table.exit_probabilities.sum() == pytest.approx(0.025, abs=1e-6)
        assert np.allclose(table.exit_probabilities, table.increments, atol=1e-9)
        assert np.allclose(crossing_probabilities(t, table.boundaries), table.increments, atol=1e-9)

    def test_published_pocock_type_values(self):
        t = [0.2, 0.4, 0.6, 0.8, 1.0]
        table = compute_boundaries(t, SpendingFunction("pocock", 0.025))
        assert np.allclose(table.boundaries, [2.438, 2.427, 2.410, 2.397, 2.386], atol=2e-3)

    def test_flat_spending_warns(self):
        sf = SpendingFunction("power", 0.05, 1e6)
        with pytest.warns(UserWarning, match="boundary set to"):
            table = compute_boundaries([0.001, 0.002, 1.0], sf)
        assert math.isinf(table.boundaries[0])

    def test_nonmonotone_fractions(self):
        with pytest.raises(SpecError):
            compute_boundaries([0.5, 0.3, 1.0], SpendingFunction())


class TestInflation:
    def test_single_look(self):
        assert inflation_factor([1.0], SpendingFunction("obf"), 0.1) == 1.0

    def test_ten_looks_against_monte_carlo(self):
        t = [k / 10 for k in range(1, 11)]
        sf = SpendingFunction("obf", 0.05)
        table = compute_boundaries(t, sf)
        L = inflation_factor(t, sf, 0.1, table.boundaries)
        assert 1.0 < L < 1.15
        drift = (Z05 + stats.norm.isf(0.1)) * math.sqrt(L)
        hits = canonical_crossings(t, table.boundaries, 2_000_000, seed=7, drift=drift)
        assert hits.sum() / 2_000_000 == pytest.approx(0.9, abs=0.005)

    def test_more_looks_need_more_information(self):
        sf = SpendingFunction("pocock", 0.05)
        ls = [inflation_factor([k / K for k in range(1, K + 1)], sf, 0.1) for K in (1, 2, 5)]
        assert ls == sorted(ls)
        assert ls[-1] > 1.1


class TestMonitor:
    @pytest.fixture
    def design(self):
        return plan_design(0.05, 0.9, 0.2, looks=4)

    def test_reject_at_first_look(self, design):
        st_ = MonitorState()
        info = design.fractions[0] * design.i_max_inflated
        assert monitor_step(st_, info, design.boundaries[0] + 0.1, design) is Decision.REJECT
        assert st_.records[0].rejected and len(st_.records) == 1

    def test_continue_before_first_look(self, design):
        st_ = MonitorState()
        info = 0.5 * design.fractions[0] * design.i_max_inflated
        assert monitor_step(st_, info, 10.0, design) is Decision.CONTINUE
        assert st_.records == []

    def test_accept_at_max(self, design):
        st_ = MonitorState()
        assert monitor_step(st_, 1.01 * design.i_max_inflated, 0.0, design) is Decision.ACCEPT_AT_MAX
        assert len(st_.records) == design.looks
        with pytest.raises(RuntimeError):
            monitor_step(st_, design.i_max_inflated, 0.0, design)

    def test_skipped_looks_are_checked_in_order(self, design):
        st_ = MonitorState()
        info = design.fractions[2] * design.i_max_inflated
        stat = design.boundaries[2] + 0.01
        assert stat < design.boundaries[1]
        assert monitor_step(st_, info, stat, design) is Decision.REJECT
        assert [r.boundary for r in st_.records] == list(design.boundaries[:3])
        assert [r.rejected for r in st_.records] == [False, False, True]

    def test_plan_values(self):
        d = plan_design(0.05, 0.9, 0.2, looks=10)
        assert d.i_max == pytest.approx(214.06, abs=0.05)
        assert d.i_max_inflated == pytest.approx(d.inflation * d.i_max)
        assert d.boundaries[-1] < d.boundaries[0]


class TestInfoFraction:
    def test_linear_information(self):
        path = np.arange(1, 1001, dtype=float)
        rep = info_fraction_diagnostics(path, [0.5, 0.5], [0, 1])
        assert rep.gamma == 1.0
        assert np.allclose(rep.empirical, rep.calendar)

    def test_inverse(self):
        rep = info_fraction_diagnostics(np.ones(10), [0.6, 0.4], [0, 1])
        assert rep.gamma == pytest.approx(2 / 3)
        r = np.linspace(0.1, 1.0, 10)
        assert np.allclose(rep.inverse(r ** rep.gamma), r, atol=1e-15)

    @pytest.mark.slow
    def test_two_arm_limit(self):
        from urnbandit import inference
        from urnbandit.allocation import init_from_rewards, unb_step_from_uniforms
        from urnbandit.estimators import update_moments
        from urnbandit.kernel import RewardSpec, rewards_from_normals

        spec = RewardSpec.of("bernoulli", (0.6, 0.4))
        reps, n = 100, 100_000
        g = np.random.default_rng(99)
        st_ = init_from_rewards(rewards_from_normals(spec, 0, g.standard_normal((reps, 20, 2))))
        h = inference.difference(0, 1, 2)
        info = {}
        for t in range(1, n + 1):
            xi = rewards_from_normals(spec, t, g.standard_normal((reps, 2)))
            unb_step_from_uniforms(st_, np.ones(reps, dtype=int), xi, g.random((reps, 1)))
            if t in (n // 2, n):
                info[t] = inference.adaptive_statistic(update_moments(st_), h).information
        ratio = np.median(info[n // 2] / info[n])
        assert ratio == pytest.approx(0.5 ** (2 / 3), abs=0.05)
