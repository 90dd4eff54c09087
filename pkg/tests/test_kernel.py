import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnbandit import kernel
from urnbandit.errors import CalibrationError, CapacityError, DegenerateUrnError, SpecError
from urnbandit.kernel import (BudgetSpec, RewardSpec, RngStream, calibrate_copula, draw_budget,
                              draw_rewards, mvhyper_pmf, mvhyper_sample,
                              mvhyper_sample_from_uniforms, rewards_from_normals)


def _freq(budget, weights, n, seed=0):
    rng = np.random.default_rng(seed)
    w = np.broadcast_to(np.asarray(weights, float), (n, len(weights)))
    x = mvhyper_sample_from_uniforms(np.full(n, budget), w, rng.random((n, budget)))
    keys, counts = np.unique(x, axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}


class TestRngStream:
    def test_same_key_same_sequence(self):
        a, b = RngStream(42, 3), RngStream(42, 3)
        assert np.array_equal(a.random(100), b.random(100))
        assert np.array_equal(a.standard_normal(10), b.standard_normal(10))

    def test_distinct_streams_differ_and_are_uncorrelated(self):
        x = RngStream(42, 0).standard_normal(200_000)
        y = RngStream(42, 1).standard_normal(200_000)
        assert not np.array_equal(x[:10], y[:10])
        assert abs(np.corrcoef(x, y)[0, 1]) < 0.01


class TestSampler:
    def test_full_budget_is_deterministic(self):
        for s in range(20):
            x = mvhyper_sample(3, (2, 1, 0), RngStream(s))
            assert x.tolist() == [2, 1, 0]

    def test_two_of_three(self):
        f = _freq(2, (2, 1), 120_000)
        assert f[(2, 0)] == pytest.approx(1 / 3, abs=0.005)
        assert f[(1, 1)] == pytest.approx(2 / 3, abs=0.005)

    def test_symmetric_single_draw(self):
        f = _freq(1, (5, 5), 100_000)
        assert f[(1, 0)] == pytest.approx(0.5, abs=0.006)

    def test_capacity_error(self):
        with pytest.raises(CapacityError):
            mvhyper_sample(4, (1.0, 1.5), RngStream(0))

    def test_real_weights_use_ceiling_capacity(self):
        x = mvhyper_sample(3, (1.0, 1.5), RngStream(0))
        assert x.tolist() == [1, 2]

    def test_degenerate_urn(self):
        with pytest.raises(DegenerateUrnError):
            mvhyper_sample(1, (0.0, 0.0), RngStream(0))

    def test_zero_budget_rows_draw_nothing(self):
        x = mvhyper_sample_from_uniforms(np.array([0, 2]), np.array([[0.0, 0.0], [3.0, 1.0]]),
                                         np.full((2, 2), 0.1))
        assert x[0].tolist() == [0, 0]
        assert x[1].sum() == 2

    @settings(max_examples=60, deadline=None)
    @given(w=st.lists(st.floats(0, 20), min_size=2, max_size=5), data=st.data())
    def test_budget_conservation_and_support(self, w, data):
        w = np.array(w)
        cap = int(np.ceil(w).sum())
        if cap == 0:
            return
        n = data.draw(st.integers(1, cap))
        x = mvhyper_sample(n, w, RngStream(data.draw(st.integers(0, 10**6))))
        assert x.sum() == n
        assert np.all(x[w == 0] == 0)
        assert np.all(x <= np.ceil(w))

    def test_exchangeability(self):
        a = _freq(3, (4, 2, 1), 100_000, seed=1)
        b = _freq(3, (1, 4, 2), 100_000, seed=2)
        for k, p in a.items():
            permuted = (k[2], k[0], k[1])
            assert b.get(permuted, 0.0) == pytest.approx(p, abs=0.008)


class TestPmf:
    def test_two_of_three(self):
        assert mvhyper_pmf(2, (2, 1), (2, 0)) == pytest.approx(1 / 3)

    def test_normalisation(self):
        total = sum(mvhyper_pmf(3, (4, 2, 1), x)
                    for x in itertools.product(range(5), range(3), range(2)))
        assert total == pytest.approx(1.0, abs=1e-15)

    def test_outside_support(self):
        assert mvhyper_pmf(3, (2, 1), (3, 0)) == 0.0
        assert mvhyper_pmf(2, (2, 1), (1, 0)) == 0.0

    def test_rejects_real_weights(self):
        with pytest.raises(SpecError):
            mvhyper_pmf(1, (1.5, 1), (1, 0))

    def test_against_scipy(self):
        from scipy.stats import multivariate_hypergeom
        w, n = (5, 3, 4), 6
        for x in itertools.product(range(6), range(4), range(5)):
            if sum(x) == n:
                assert mvhyper_pmf(n, w, x) == pytest.approx(multivariate_hypergeom.pmf(x, w, n))


class TestRewards:
    def test_independent_bernoulli_means(self):
        spec = RewardSpec.of("bernoulli", (0.6, 0.4))
        r = rewards_from_normals(spec, 0, np.random.default_rng(3).standard_normal((1_000_000, 2)))
        assert np.allclose(r.mean(axis=0), (0.6, 0.4), atol=0.002)

    def test_exponential_mean(self):
        spec = RewardSpec.of("exponential", (7.5,))
        r = rewards_from_normals(spec, 0, np.random.default_rng(4).standard_normal((1_000_000, 1)))
        assert r.mean() == pytest.approx(7.5, abs=0.03)

    @pytest.mark.parametrize("family,means", [("bernoulli", (0.5, 0.5)), ("poisson", (6.5, 6.0)),
                                              ("exponential", (7.5, 6.0))])
    def test_realised_correlation(self, family, means):
        spec = RewardSpec.of(family, means, 0.5)
        r = rewards_from_normals(spec, 0, np.random.default_rng(5).standard_normal((1_000_000, 2)))
        assert np.corrcoef(r.T)[0, 1] == pytest.approx(0.5, abs=0.02)
        assert np.allclose(r.mean(axis=0), means, rtol=0.01)
        assert np.allclose(r.var(axis=0), spec.variances, rtol=0.02)

    def test_draw_rewards_shape_and_support(self):
        spec = RewardSpec.of("poisson", (3.0, 4.0, 5.0), 0.3)
        r = draw_rewards(spec, 1, RngStream(1))
        assert r.shape == (3,)
        assert np.all(r >= 0)

    def test_poisson_marginal_pmf(self):
        spec = RewardSpec.of("poisson", (2.0,))
        r = rewards_from_normals(spec, 0, np.random.default_rng(6).standard_normal((400_000, 1)))
        for k in range(5):
            p = math.exp(-2.0) * 2.0**k / math.factorial(k)
            assert np.mean(r == k) == pytest.approx(p, abs=0.004)

    def test_spec_validation(self):
        with pytest.raises(SpecError):
            RewardSpec.of("bernoulli", (1.2, 0.4))
        with pytest.raises(SpecError):
            RewardSpec.of("gamma", (1.0, 2.0))
        with pytest.raises(SpecError):
            RewardSpec.of("poisson", (0.0, 2.0))


class TestCopula:
    def test_zero_target(self):
        assert calibrate_copula(("bernoulli", 0.5), ("bernoulli", 0.5), 0.0) == 0.0

    def test_tetrachoric_identity(self):
        r = calibrate_copula(("bernoulli", 0.5), ("bernoulli", 0.5), 0.5)
        assert r == pytest.approx(math.sin(math.pi / 4), abs=1e-8)

    def test_bernoulli_closed_form_against_monte_carlo(self):
        rz = 0.6
        z = np.random.default_rng(7).standard_normal((2_000_000, 2))
        z[:, 1] = rz * z[:, 0] + math.sqrt(1 - rz * rz) * z[:, 1]
        x = np.column_stack([z[:, 0] > kernel.special.ndtri(0.3), z[:, 1] > kernel.special.ndtri(0.6)])
        mc = np.corrcoef(x.T.astype(float))[0, 1]
        assert kernel.induced_correlation(("bernoulli", 0.7), ("bernoulli", 0.4), rz) == \
            pytest.approx(mc, abs=0.003)

    def test_monotone(self):
        m = ("bernoulli", 0.7), ("bernoulli", 0.4)
        values = [calibrate_copula(*m, t) for t in (0.1, 0.2, 0.3, 0.4)]
        assert values == sorted(values)

    def test_unattainable(self):
        with pytest.raises(CalibrationError, match="upper bound"):
            calibrate_copula(("bernoulli", 0.6), ("bernoulli", 0.4), 0.7)


class TestBudget:
    def test_constant(self):
        spec = BudgetSpec.constant(4)
        assert all(draw_budget(spec, RngStream(s)) == 4 for s in range(10))
        assert spec.N == 4 and spec.Q == 16

    def test_uniform_moments(self):
        spec = BudgetSpec((3, 4, 5))
        assert spec.N == pytest.approx(4.0)
        assert spec.Q == pytest.approx(50 / 3)
        draws = spec.from_uniforms(np.random.default_rng(0).random(300_000))
        assert draws.mean() == pytest.approx(4.0, abs=0.01)
        assert set(np.unique(draws)) == {3, 4, 5}

    def test_rejects_zero(self):
        with pytest.raises(SpecError):
            BudgetSpec((0, 1))
        with pytest.raises(SpecError):
            BudgetSpec(())
