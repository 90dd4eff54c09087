import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnbandit import inference as inf
from urnbandit.allocation import init_from_rewards, unb_step
from urnbandit.errors import DegenerateFunctionalError, SpecError, UnestimableArmError
from urnbandit.estimators import MomentEstimates, update_moments
from urnbandit.kernel import RewardSpec, RngStream, draw_rewards


def _est(var=(1.0, 1.0), share=(0.5, 0.5), ratio=4.0, W=(100.0, 100.0), S=None, cov=0.0, mu=None):
    var = np.asarray(var, float)
    d = len(var)
    mu = np.full(d, 0.5) if mu is None else np.asarray(mu, float)
    c = np.full((d, d), cov)
    np.fill_diagonal(c, var)
    W = np.asarray(W, float)
    return MomentEstimates(
        mu=mu, q=var + mu ** 2, var=var, q_cross=c, cov=c,
        corr=c, share=np.asarray(share, float), m_n=np.asarray(1.0), m_q=np.asarray(ratio),
        W=W, S=W if S is None else np.asarray(S, float), cross_missing=np.zeros((d, d), bool),
        var_clamped=np.zeros(d, bool))


def _run(spec, budget, rounds, seed):
    rng = RngStream(seed)
    st_ = init_from_rewards(np.array([draw_rewards(spec, 0, rng) for _ in range(5)]))
    for t in range(1, rounds + 1):
        _, st_ = unb_step(st_, budget, draw_rewards(spec, t, rng), rng)
    return st_


class TestHypotheses:
    def test_linear_gradient(self):
        h = inf.linear([1.0, -2.0, 0.5])
        assert np.allclose(inf.gradient(h, np.array([3.0, 1.0, 2.0])), [1.0, -2.0, 0.5])

    def test_ratio_gradient(self):
        h = inf.ratio(0, 1, 2)
        assert np.allclose(inf.gradient(h, np.array([2.0, 4.0])), [0.25, -0.125])

    def test_numeric_matches_analytic(self):
        h = inf.ratio(0, 1, 3, null_value=0.5)
        numeric = inf.Hypothesis(func=h.func, d=3, arms=h.arms, null_value=0.5)
        mu = np.array([1.3, 2.1, 0.7])
        assert np.allclose(inf.gradient(numeric, mu), inf.gradient(h, mu), atol=1e-6)

    def test_ratio_domain(self):
        with pytest.raises(SpecError):
            inf.gradient(inf.ratio(0, 1, 2), np.array([1.0, -1.0]))

    def test_threshold_and_control(self):
        assert inf.threshold(1, 0.3, 3).value(np.array([0.0, 0.5, 0.0])) == pytest.approx(0.2)
        assert inf.control_average(3).value(np.array([1.0, 0.4, 0.6])) == pytest.approx(0.5)


class TestDeltaVariance:
    def test_worked_example(self):
        sig = np.array([[2.5, 0.75], [0.75, 2.5]])
        v = inf.delta_variance([1.0, -1.0], [100.0, 50.0], sig)
        assert v == pytest.approx(2.5 / 100 + 2.5 / 50 - 2 * 0.75 / math.sqrt(5000))
        assert v == pytest.approx(0.0538, abs=1e-4)

    def test_single_arm(self):
        sig = np.array([[3.0, 1.0], [1.0, 2.0]])
        assert inf.delta_variance([0.0, 1.0], [10.0, 40.0], sig) == pytest.approx(2.0 / 40)

    def test_zero_gradient(self):
        with pytest.raises(DegenerateFunctionalError):
            inf.delta_variance([0.0, 0.0], [1.0, 1.0], np.eye(2))

    def test_unestimable(self):
        with pytest.raises(UnestimableArmError):
            inf.delta_variance([1.0, -1.0], [10.0, 0.0], np.eye(2))


class TestStatistic:
    def test_values(self):
        assert inf.test_statistic(0.0, 0.3) == 0.0
        assert inf.test_statistic(0.2, 0.1) == pytest.approx(2.0)

    def test_zero_se(self):
        with pytest.raises(SpecError):
            inf.test_statistic(0.2, 0.0)

    def test_critical_value(self):
        assert inf.critical_value(0.05) == pytest.approx(1.6448536, abs=1e-6)

    def test_scale_equivariance(self):
        spec = RewardSpec.of("poisson", (4.0, 3.0))
        st_ = _run(spec, 3, 200, 11)
        scaled = st_.copy()
        c = 7.3
        scaled.A *= c
        scaled.B *= c * c
        scaled.C *= c * c
        h = inf.difference(0, 1, 2)
        a = inf.adaptive_statistic(update_moments(st_), h).value
        b = inf.adaptive_statistic(update_moments(scaled), h).value
        assert b == pytest.approx(a, rel=1e-9)

    def test_single_play_matches_classical(self):
        spec = RewardSpec.of("bernoulli", (0.6, 0.5))
        est = update_moments(_run(spec, 1, 300, 3))
        h = inf.difference(0, 1, 2)
        a = inf.adaptive_statistic(est, h)
        b = inf.classical_statistic(est, h)
        assert a.value == pytest.approx(b.value)
        assert a.gamma == pytest.approx(1.0)


class TestCorrectionFactors:
    def test_single_play(self):
        est = _est(ratio=1.0)
        cf = inf.correction_factors(est, inf.difference(0, 1, 2))
        assert np.allclose(cf.inflation, 1.0)
        assert cf.lam == pytest.approx(1.0)
        assert cf.gamma == pytest.approx(1.0)

    def test_reinforcement_example(self):
        est = _est()
        assert inf.gamma_difference(est) == pytest.approx(2.5)
        cf = inf.correction_factors(est, inf.difference(0, 1, 2))
        assert cf.gamma == pytest.approx(2.5)
        assert cf.table == pytest.approx(2.5)

    def test_threshold_factor(self):
        est = _est(W=(80.0, 40.0), S=(40.0, 40.0))
        assert inf.gamma_threshold(est, 0) == pytest.approx(2.5 * 40 / 80)

    def test_closed_form_agrees_with_quadratic_form(self):
        est = _est(var=(1.0, 2.0, 0.5), share=(0.5, 0.3, 0.2), W=(90.0, 40.0, 30.0),
                   S=(50.0, 30.0, 25.0))
        cf = inf.correction_factors(est, inf.control_average(3))
        assert cf.table == pytest.approx(cf.gamma * cf.lam)

    def test_vanishing_denominator(self):
        with pytest.raises(ZeroDivisionError, match="threshold"):
            inf.gamma_threshold(_est(W=(0.0, 1.0)), 0)

    @pytest.mark.parametrize("rho,expected", [(0.0, 2.5), (0.5, 1.75)])
    def test_limit(self, rho, expected):
        cov = np.array([[1.0, rho], [rho, 1.0]])
        assert inf.gamma_limit([1, -1], cov, [0.5, 0.5], [0, 1], 4.0, 16.0) == pytest.approx(expected)

    def test_limit_with_suboptimal_arm(self):
        assert inf.gamma_limit([1, -1], np.eye(2), [1.0, 0.0], [0], 4.0, 16.0) == 1.0


class TestNcp:
    def test_zero_effect(self):
        assert inf.ncp_unb(0.0, 1.0, [0.24, 0.24], [115, 115]) == 0.0

    def test_example(self):
        v = inf.ncp_unb(0.2, 1.0, [0.24, 0.24], [115.0, 115.0])
        assert v == pytest.approx(0.2 / math.sqrt(0.48 / 115))
        assert v == pytest.approx(3.096, abs=1e-3)

    def test_ucb_and_zero_counts(self):
        assert inf.ncp_ucb(0.2, [0.24, 0.24], [115, 115]) == pytest.approx(3.096, abs=1e-3)
        with pytest.raises(SpecError):
            inf.ncp_ucb(0.2, [0.24, 0.24], [0, 115])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), budget=st.integers(1, 4))
def test_variance_positive_and_information_inverse(seed, budget):
    spec = RewardSpec.of("exponential", (2.0, 1.5))
    est = update_moments(_run(spec, budget, 60, seed))
    s = inf.adaptive_statistic(est, inf.difference(0, 1, 2))
    assert s.variance > 0
    assert s.information * s.variance == pytest.approx(1.0)
