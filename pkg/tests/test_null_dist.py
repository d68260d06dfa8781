"""
Tests for the bivariate normal kernel, limit covariances and limit draws.
"""
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr
from scipy.stats import norm

from conclique_gof.errors import ConfigError, NumericalError
from conclique_gof.models import BinaryMrfSpec, GaussianMrfSpec
from conclique_gof.null_dist import (
    CovarianceKind,
    LimitCovarianceSpec,
    NullQuantileTable,
    bvn_cdf,
    check_null_parameters,
    cm_distance,
    covariance_matrix,
    estimate_generic_covariance,
    factorize_covariance,
    ks_distance,
    limit_cov_g4,
    limit_cov_generic,
    limit_cov_generic_se,
    limit_covariance_for,
    p_value,
    simulate_null_quantiles,
)
from conclique_gof.residuals import GofStatistics
from conclique_gof.rng import make_rng


def bvn_oracle(h, k, rho):
    """P(X <= h, Y <= k) by one-dimensional quadrature of the conditional law."""
    scale = math.sqrt(1.0 - rho * rho)
    value, _ = quad(lambda x: norm.pdf(x) * ndtr((k - rho * x) / scale), -np.inf, h, epsabs=1e-13, epsrel=1e-12)
    return value


class TestBivariateNormal:
    """Test bvn_cdf against closed forms and quadrature."""

    @pytest.mark.parametrize("rho", [-0.24, 0.0, 0.1, 0.24, -0.95, 0.95])
    def test_orthant(self, rho):
        assert bvn_cdf(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-7)

    @pytest.mark.parametrize(
        "h, k, rho",
        [
            (0.5, -0.3, 0.6),
            (-1.2, 0.4, -0.24),
            (2.0, 1.5, 0.1),
            (-0.7, -0.9, 0.93),
            (0.3, -0.2, -0.97),
            (1.1, 1.4, 0.99),
            (-2.5, 2.5, -0.5),
        ],
    )
    def test_quadrature_oracle(self, h, k, rho):
        assert bvn_cdf(h, k, rho) == pytest.approx(bvn_oracle(h, k, rho), abs=1e-7)

    def test_independence(self):
        h = np.array([-1.0, 0.0, 0.7])
        k = np.array([0.3, -0.4, 1.9])
        np.testing.assert_allclose(bvn_cdf(h, k, 0.0), ndtr(h) * ndtr(k), atol=1e-12)

    def test_infinite_limits(self):
        assert bvn_cdf(np.inf, 0.3, 0.5) == pytest.approx(ndtr(0.3))
        assert bvn_cdf(-0.2, np.inf, 0.5) == pytest.approx(ndtr(-0.2))
        assert bvn_cdf(-np.inf, 0.3, 0.5) == 0.0
        assert bvn_cdf(np.inf, np.inf, -0.5) == 1.0

    def test_symmetric_in_arguments(self):
        assert bvn_cdf(0.4, -1.0, 0.3) == pytest.approx(bvn_cdf(-1.0, 0.4, 0.3), abs=1e-12)

    def test_vector_shape(self):
        assert bvn_cdf(np.zeros((2, 3)), 0.0, 0.2).shape == (2, 3)

    def test_invalid_rho(self):
        with pytest.raises(ValueError):
            bvn_cdf(0.0, 0.0, 1.0)


class TestFourNearestCovariance:
    """Test the closed-form Gaussian four-nearest covariance."""

    def test_diagonal(self):
        assert limit_cov_g4(0.3, 0.6, 0, 0, 0.1) == pytest.approx(2 * (0.3 - 0.18))

    def test_cross_at_median(self):
        expected = 8 * (math.asin(-0.1) / (2 * math.pi))
        assert limit_cov_g4(0.5, 0.5, 0, 1, 0.1) == pytest.approx(expected, abs=1e-7)

    def test_cross_vanishes_when_independent(self):
        assert limit_cov_g4(0.3, 0.8, 1, 0, 0.0) == pytest.approx(0.0, abs=1e-10)

    def test_endpoints(self):
        assert limit_cov_g4(0.0, 0.5, 0, 1, 0.2) == 0.0
        assert limit_cov_g4(0.4, 1.0, 1, 0, 0.2) == 0.0

    def test_symmetry(self):
        assert limit_cov_g4(0.2, 0.7, 0, 1, 0.15) == pytest.approx(limit_cov_g4(0.7, 0.2, 1, 0, 0.15))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            limit_cov_g4(0.5, 0.5, 0, 2, 0.1)
        with pytest.raises(ValueError):
            limit_cov_g4(0.5, 0.5, 0, 1, 0.25)
        with pytest.raises(ValueError):
            limit_cov_g4(1.5, 0.5, 0, 1, 0.1)

    def test_covariance_matrix(self):
        spec = LimitCovarianceSpec.gaussian_four_nearest(0.2)
        u = np.arange(1, 33) / 33
        cov = covariance_matrix(spec, u)
        assert cov.shape == (64, 64)
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(cov).min() > -1e-7
        assert cov[3, 32 + 5] == pytest.approx(limit_cov_g4(u[3], u[5], 0, 1, 0.2))


class TestGenericCovariance:
    """Test Monte Carlo estimation of cross-conclique covariances."""

    @pytest.mark.parametrize("eta", [0.0, 0.1, 0.24])
    def test_matches_closed_form(self, four_nearest, cover4, eta):
        model = GaussianMrfSpec(alpha=0.0, eta=eta, tau2=1.0, template=four_nearest)
        spec = estimate_generic_covariance(
            model, cover4, make_rng(12), window_shape=(20, 20), mc_fields=300, burn_in=100, spacing=5
        )
        assert spec.kind == CovarianceKind.GENERIC_MONTE_CARLO
        assert len(spec.terms(0, 1)) == 8
        for u, v in [(0.5, 0.5), (0.2, 0.7), (0.8, 0.3), (0.1, 0.1), (0.9, 0.6)]:
            estimate = limit_cov_generic(spec, u, v, 0, 1)
            se = limit_cov_generic_se(spec, u, v, 0, 1)
            assert se > 0
            assert abs(estimate - limit_cov_g4(u, v, 0, 1, eta)) < 3 * se + 1e-3

    def test_diagonal_is_exact_and_matrix_consistent(self, four_nearest, cover4):
        model = GaussianMrfSpec(alpha=0.0, eta=0.15, tau2=1.0, template=four_nearest)
        spec = estimate_generic_covariance(
            model, cover4, make_rng(4), window_shape=(10, 10), mc_fields=60, burn_in=20, spacing=2
        )
        assert limit_cov_generic(spec, 0.3, 0.6, 1, 1) == pytest.approx(2 * (0.3 - 0.18))
        assert limit_cov_generic_se(spec, 0.3, 0.6, 1, 1) == 0.0
        u = np.arange(1, 17) / 17
        cov = covariance_matrix(spec, u)
        assert cov[2, 16 + 9] == pytest.approx(limit_cov_generic(spec, u[2], u[9], 0, 1), abs=1e-12)
        assert cov[16 + 9, 2] == pytest.approx(limit_cov_generic(spec, u[9], u[2], 1, 0), abs=1e-12)

    def test_too_few_fields(self, gaussian_model, cover4):
        with pytest.raises(ConfigError):
            estimate_generic_covariance(gaussian_model, cover4, make_rng(0), mc_fields=10)

    def test_covariance_selection(self, four_nearest, cover4):
        gaussian = GaussianMrfSpec(eta=0.1, template=four_nearest)
        assert limit_covariance_for(gaussian, cover4, seed=1).kind == CovarianceKind.GAUSSIAN_FOUR_NEAREST
        binary = BinaryMrfSpec(eta=0.2, template=four_nearest)
        spec = limit_covariance_for(binary, cover4, seed=1, mc_fields=50, mc_window=(8, 8), burn_in=10, spacing=1)
        assert spec.kind == CovarianceKind.GENERIC_MONTE_CARLO

    def test_parameter_space(self, four_nearest):
        with pytest.raises(ConfigError):
            check_null_parameters(GaussianMrfSpec(eta=0.3, template=four_nearest))
        check_null_parameters(BinaryMrfSpec(eta=3.0, template=four_nearest))

    def test_monte_carlo_draws_match_closed_form(self, four_nearest, cover4):
        model = GaussianMrfSpec(alpha=0.0, eta=0.2, tau2=1.0, template=four_nearest)
        spec = estimate_generic_covariance(
            model, cover4, make_rng(31), window_shape=(16, 16), mc_fields=200, burn_in=50, spacing=2
        )
        estimated = simulate_null_quantiles(spec, seed=21, grid_size=64, replicates=3000)
        exact_spec = LimitCovarianceSpec.gaussian_four_nearest(0.2)
        exact = simulate_null_quantiles(exact_spec, seed=22, grid_size=64, replicates=3000)
        assert np.isfinite(estimated.draws).all()
        np.testing.assert_allclose(estimated.quantile(0.95), exact.quantile(0.95), rtol=0.1)

    def test_binary_null_table(self, four_nearest, cover4):
        binary = BinaryMrfSpec(kappa=-0.2, eta=0.3, template=four_nearest)
        spec = limit_covariance_for(binary, cover4, seed=9, mc_fields=100, mc_window=(16, 16), burn_in=20, spacing=2)
        table = simulate_null_quantiles(spec, seed=9, grid_size=128, replicates=1000)
        assert spec.kind == CovarianceKind.GENERIC_MONTE_CARLO
        assert np.isfinite(table.draws).all()
        # each W_j has variance 2 (min(u, v) - uv): sup quantiles sit near sqrt(2) times Kolmogorov's
        assert 1.5 < table.quantile(0.95)[0] < 3.0
        assert (table.quantile(0.95) < table.quantile(0.99)).all()


class TestLimitDraws:
    """Test simulation of the limit functionals."""

    def test_brownian_bridge_sup_quantile(self):
        """Single conclique with variance 2 (min(u, v) - uv): sup quantile is sqrt(2) times Kolmogorov's."""
        spec = LimitCovarianceSpec.independent(det_delta=2, group_sizes=(1,))
        table = simulate_null_quantiles(spec, seed=2024, grid_size=512, replicates=20000)
        assert table.quantile(0.95)[0] == pytest.approx(math.sqrt(2) * 1.3581, rel=0.015)
        np.testing.assert_allclose(table.draws[:, 0], table.draws[:, 1])
        np.testing.assert_allclose(table.draws[:, 2], table.draws[:, 3])

    def test_uncorrected_sup_is_smaller(self):
        spec = LimitCovarianceSpec.independent(det_delta=2, group_sizes=(1,))
        corrected = simulate_null_quantiles(spec, seed=5, grid_size=64, replicates=500)
        raw = simulate_null_quantiles(spec, seed=5, grid_size=64, replicates=500, sup_correction=False)
        assert (corrected.draws[:, 0] > raw.draws[:, 0]).all()
        np.testing.assert_array_equal(corrected.draws[:, 2], raw.draws[:, 2])

    def test_thread_count_does_not_matter(self):
        spec = LimitCovarianceSpec.gaussian_four_nearest(0.1)
        one = simulate_null_quantiles(spec, seed=8, grid_size=64, replicates=2500, threads=1)
        three = simulate_null_quantiles(spec, seed=8, grid_size=64, replicates=2500, threads=3)
        np.testing.assert_array_equal(one.draws, three.draws)

    def test_argument_validation(self):
        spec = LimitCovarianceSpec.independent(det_delta=2, group_sizes=(1,))
        with pytest.raises(ValueError):
            simulate_null_quantiles(spec, seed=1, grid_size=32)
        with pytest.raises(ValueError):
            simulate_null_quantiles(spec, seed=1, replicates=50)

    def test_indefinite_covariance(self):
        with pytest.raises(NumericalError):
            factorize_covariance(np.diag([1.0, -1.0]))

    def test_slightly_indefinite_covariance_is_clipped(self):
        cov = np.array([[1.0, 1.001], [1.001, 1.0]])
        factor = factorize_covariance(cov)
        np.testing.assert_allclose(factor @ factor.T, cov, atol=1e-3)
        assert np.linalg.eigvalsh(factor @ factor.T).min() > -1e-12

    def test_positive_definite_factor_is_cholesky(self):
        u = np.arange(1, 33) / 33
        cov = covariance_matrix(LimitCovarianceSpec.gaussian_four_nearest(0.2), u)
        factor = factorize_covariance(cov)
        np.testing.assert_allclose(factor, np.tril(factor))
        np.testing.assert_allclose(factor @ factor.T, cov, atol=1e-7)

    def test_summary(self):
        spec = LimitCovarianceSpec.gaussian_four_nearest(0.0)
        summary = simulate_null_quantiles(spec, seed=3, grid_size=64, replicates=200).summary()
        assert set(summary["quantiles"]) == {"q90", "q95", "q99"}
        assert summary["config"]["replicates"] == 200


class TestPValuesAndDistances:
    """Test p-values and distribution distances."""

    def _table(self, draws):
        draws = np.asarray(draws, dtype=float)
        return NullQuantileTable(
            draws=draws,
            levels=(0.95,),
            quantiles=np.quantile(draws, [0.95], axis=0),
            grid_size=64,
            replicates=draws.shape[0],
            seed=0,
            r=2.0,
        )

    def test_add_one_rule(self):
        draws = np.tile(np.arange(1.0, 11.0)[:, None], (1, 4))
        table = self._table(draws)
        observed = GofStatistics.from_array([100.0, 0.0, 5.0, 10.0])
        np.testing.assert_allclose(p_value(observed, table), [1 / 11, 11 / 11, 7 / 11, 2 / 11])

    def test_p_value_decreases_with_observed(self):
        table = self._table(make_rng(4).gamma(2.0, size=(500, 4)))
        observed = np.linspace(0.0, 30.0, 61)
        p = np.array([p_value(GofStatistics.from_array([t] * 4), table) for t in observed])
        assert (np.diff(p, axis=0) <= 0).all()
        np.testing.assert_allclose(p[0], 1.0)
        np.testing.assert_allclose(p[-1], 1 / 501)

    def test_distances_identical(self):
        sample = make_rng(1).normal(size=200)
        assert ks_distance(sample, sample) == 0.0
        assert cm_distance(sample, sample) == 0.0

    def test_distances_disjoint(self):
        assert ks_distance([0.0], [1.0]) == 1.0
        assert cm_distance([0.0], [1.0]) == pytest.approx(1.0)

    def test_cm_distance_hand_computed(self):
        # |F_a - F_b| is 0.5 on [0, 2): integral of squares is 0.5
        assert cm_distance([0.0, 2.0], [1.0, 1.0]) == pytest.approx(math.sqrt(0.5))

    def test_distances_empty(self):
        with pytest.raises(ValueError):
            ks_distance([], [1.0])
