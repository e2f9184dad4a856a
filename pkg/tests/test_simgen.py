import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transqr.core import InvalidInputError
from transqr.simgen import (SimDesign, error_shift, gen_covariates, gen_errors,
                            gen_nontransferable_coefs, gen_rademacher, gen_response, gen_scenario,
                            gen_target_coefs, gen_transferable_coefs, nontransferable_bound,
                            substream)

from oracles import ar1_cov


class TestCovariates:
    def test_moments(self):
        Z = gen_covariates(50_000, 5, np.random.default_rng(0))
        C = np.cov(Z, rowvar=False)
        assert C[0, 0] == pytest.approx(1.0, abs=0.05)
        corr = np.corrcoef(Z, rowvar=False)
        assert corr[0, 1] == pytest.approx(0.5, abs=0.05)
        assert corr[0, 3] == pytest.approx(0.125, abs=0.05)
        np.testing.assert_allclose(C, ar1_cov(5), atol=0.05)

    def test_recursion_population_covariance(self):
        # z = L e with L lower triangular from the recursion; L L' must be the AR(1) matrix
        p = 6
        E = np.eye(p)
        L = gen_covariates(p, p, _Fixed(E)).T
        np.testing.assert_allclose(L @ L.T, ar1_cov(p), atol=1e-14)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            gen_covariates(0, 3, np.random.default_rng(0))


class _Fixed:
    """Stand-in generator returning a fixed matrix of innovations."""

    def __init__(self, e):
        self.e = e

    def standard_normal(self, shape):
        return self.e.copy()


class TestErrors:
    def test_shifts(self):
        assert error_shift("normal", 0.5) == 0.0
        assert error_shift("cauchy", 0.75) == pytest.approx(1.0, abs=1e-15)
        assert error_shift("gumbel", 0.25) == pytest.approx(-np.log(-np.log(0.25)))

    @pytest.mark.parametrize("family", ["normal", "cauchy", "gumbel"])
    @pytest.mark.parametrize("tau", [0.25, 0.5, 0.75])
    def test_tau_quantile_is_zero(self, family, tau):
        e = gen_errors(100_000, family, tau, np.random.default_rng(1))
        assert np.quantile(e, tau) == pytest.approx(0.0, abs=0.02)

    def test_unknown_family(self):
        with pytest.raises(InvalidInputError):
            gen_errors(3, "laplace", 0.5, np.random.default_rng(0))


class TestCoefficients:
    def test_target(self):
        np.testing.assert_array_equal(gen_target_coefs(5, 2), [1, 1, 0, 0, 0])
        np.testing.assert_array_equal(gen_target_coefs(3, 3), [1, 1, 1])
        b = gen_target_coefs(1000, 15)
        assert np.count_nonzero(b) == 15 and b.sum() == 15
        with pytest.raises(InvalidInputError):
            gen_target_coefs(3, 4)

    def test_rademacher(self):
        rng = np.random.default_rng(0)
        d = gen_rademacher(100_000, rng)
        assert set(np.unique(d)) == {-1.0, 1.0}
        assert abs(d.mean()) <= 0.02
        np.testing.assert_array_equal(gen_rademacher(7, np.random.default_rng(3)),
                                      gen_rademacher(7, np.random.default_rng(3)))

    def test_transferable(self):
        b0 = gen_target_coefs(20, 3)
        np.testing.assert_array_equal(gen_transferable_coefs(b0, 0.0, 20, np.random.default_rng(0)),
                                      b0)

        class Alt:
            def choice(self, a, size):
                return np.array([1.0, -1.0, 1.0, -1.0])

        np.testing.assert_array_equal(gen_transferable_coefs(np.zeros(4), 4.0, 4, Alt()),
                                      [1, -1, 1, -1])
        with pytest.raises(InvalidInputError):
            gen_transferable_coefs(b0, -1.0, 20, np.random.default_rng(0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 20), st.integers(1, 10), st.integers(0, 30))
    def test_transferable_distance_is_h(self, seed, h, s0, extra):
        p = s0 + extra + 1
        b0 = gen_target_coefs(p, s0)
        bk = gen_transferable_coefs(b0, h, p, np.random.default_rng(seed))
        assert abs(np.abs(bk - b0).sum() - h) <= 1e-12 * max(1.0, h)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 20), st.integers(1, 10), st.integers(0, 40))
    def test_nontransferable_bound_and_support(self, seed, h, s0, extra):
        p = 3 * s0 + extra
        b0 = gen_target_coefs(p, s0)
        bk = gen_nontransferable_coefs(b0, h, p, s0, np.random.default_rng(seed))
        assert np.abs(bk - b0).sum() >= nontransferable_bound(h, p, s0) - 1e-9
        big = np.abs(bk) > 2 * h / p + 0.5
        if 2 * h / p < 0.25:
            assert big.sum() == 2 * s0
            assert big[s0:2 * s0].all() and not big[:s0].any()

    def test_nontransferable_h_zero(self):
        b0 = gen_target_coefs(30, 5)
        bk = gen_nontransferable_coefs(b0, 0.0, 30, 5, np.random.default_rng(0))
        assert np.all(bk[:5] == 0) and np.all(bk[5:10] == 1)
        assert set(np.unique(bk)) == {0.0, 1.0} and bk.sum() == 10

    def test_nontransferable_infeasible(self):
        with pytest.raises(InvalidInputError):
            gen_nontransferable_coefs(gen_target_coefs(8, 3), 1.0, 8, 3, np.random.default_rng(0))


class TestResponse:
    def test_examples(self):
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((10, 3))
        b = np.array([1.0, 2.0, -1.0])
        np.testing.assert_array_equal(gen_response(Z, b, np.zeros(10)), Z @ b)
        eta = rng.standard_normal(10)
        np.testing.assert_allclose(gen_response(Z, b, eta, heterogeneous=False) - Z @ b, eta,
                                   atol=1e-14)
        Z[:, 0] = 0.0
        np.testing.assert_allclose(gen_response(Z, b, eta) - Z @ b, 0.5 * eta, atol=1e-14)

    def test_dimension_check(self):
        with pytest.raises(InvalidInputError):
            gen_response(np.ones((3, 2)), np.ones(2), np.ones(4))


class TestScenario:
    def test_design_validation(self):
        with pytest.raises(InvalidInputError):
            SimDesign(K=3, num_transferable=4)
        with pytest.raises(InvalidInputError):
            SimDesign(error_family="t")
        with pytest.raises(InvalidInputError):
            SimDesign(p=20, s0=10, num_transferable=0)
        with pytest.raises(InvalidInputError):
            SimDesign(tau=1.0)

    def test_all_transferable(self):
        sc = gen_scenario(SimDesign(p=40, s0=4, n0=10, nk=12, K=3, h=2, num_transferable=3))
        for b in sc.source_betas:
            assert np.abs(b - sc.beta0).sum() <= 2 + 1e-12
        assert sc.transferable == (1, 2, 3)
        assert sc.data.K == 3 and sc.data.target.n == 10 and sc.data.sources[0].n == 12

    def test_none_transferable(self):
        sc = gen_scenario(SimDesign(p=40, s0=4, n0=10, nk=12, K=3, h=2, num_transferable=0))
        for b in sc.source_betas:
            assert np.abs(b - sc.beta0).sum() > 2
        assert sc.transferable == ()

    def test_deterministic_and_substreams(self):
        d = SimDesign(p=30, s0=3, n0=10, nk=12, K=2, num_transferable=1, seed=9)
        a, b = gen_scenario(d), gen_scenario(d)
        for k in range(3):
            np.testing.assert_array_equal(a.data.domain(k).y, b.data.domain(k).y)
            np.testing.assert_array_equal(a.data.domain(k).Z, b.data.domain(k).Z)
        # adding a source leaves existing domains untouched
        c = gen_scenario(d.replace(K=3))
        for k in range(3):
            np.testing.assert_array_equal(a.data.domain(k).Z, c.data.domain(k).Z)
        assert not np.array_equal(substream(1, 0, 0).random(3), substream(1, 1, 0).random(3))
