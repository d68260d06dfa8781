"""
Tests for the joint Gaussian likelihood, the eta parameter space and the fitters.
"""
import logging

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import multivariate_normal, norm

import conclique_gof.estimation as estimation
from conclique_gof.errors import DataError
from conclique_gof.estimation import (
    FitMethod,
    FitResult,
    eta_parameter_space,
    fit,
    fit_ml,
    fit_pseudolikelihood,
    log_likelihood_gaussian,
    neighbor_incidence,
)
from conclique_gof.lattice import GridData, SamplingWindow, interior_mask, named_template
from conclique_gof.models import EdgeRule, GaussianMrfSpec, gibbs_simulate
from conclique_gof.rng import make_rng


def simulate(model, cover, shape, seed, n_fields=1, burn_in=200, spacing=10):
    return gibbs_simulate(
        model, SamplingWindow.full(shape), cover, make_rng(seed), burn_in=burn_in, spacing=spacing, n_fields=n_fields
    )


class TestParameterSpace:
    """Test eta bounds from the eigenvalues of H."""

    def test_rectangle(self, four_nearest):
        bounds = eta_parameter_space(neighbor_incidence(SamplingWindow.full((11, 17)), four_nearest))
        assert bounds.upper == pytest.approx(0.2563, abs=5e-5)
        assert bounds.lower == pytest.approx(-0.2563, abs=5e-5)
        assert not bounds.unbounded

    def test_torus(self, four_nearest):
        incidence = neighbor_incidence(SamplingWindow.full((10, 10)), four_nearest, periodic=True)
        assert incidence.max_degree == 4
        bounds = eta_parameter_space(incidence)
        assert bounds.lower == pytest.approx(-0.25, abs=1e-6)
        assert bounds.upper == pytest.approx(0.25, abs=1e-6)

    def test_single_edge(self, four_nearest):
        bounds = eta_parameter_space(neighbor_incidence(SamplingWindow.full((1, 2)), four_nearest))
        assert (bounds.lower, bounds.upper) == pytest.approx((-1.0, 1.0))

    def test_no_edges(self, four_nearest):
        incidence = neighbor_incidence(SamplingWindow.full((1, 1)), four_nearest)
        assert incidence.n_edges == 0
        assert eta_parameter_space(incidence).unbounded

    def test_gershgorin_without_eigenvalues(self, four_nearest):
        incidence = neighbor_incidence(SamplingWindow.full((6, 6)), four_nearest, eigen=False)
        bounds = eta_parameter_space(incidence)
        assert (bounds.lower, bounds.upper) == (-0.25, 0.25)

    def test_mask_removes_edges(self, four_nearest):
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False
        incidence = neighbor_incidence(SamplingWindow(lower=(0, 0), upper=(2, 2), mask=mask), four_nearest)
        assert incidence.n == 8
        assert incidence.n_edges == 8


class TestLikelihood:
    """Test the joint Gaussian log-likelihood."""

    def test_matches_dense_density(self, four_nearest):
        window = SamplingWindow.full((3, 3))
        incidence = neighbor_incidence(window, four_nearest)
        y = make_rng(1).normal(size=9)
        alpha, eta, tau2 = 0.4, 0.2, 1.7
        cov = np.linalg.inv(np.eye(9) - eta * incidence.matrix.toarray()) * tau2
        expected = multivariate_normal(mean=np.full(9, alpha), cov=cov).logpdf(y)
        assert log_likelihood_gaussian(y, alpha, eta, tau2, incidence) == pytest.approx(expected, rel=1e-10)

    def test_log_determinant(self, four_nearest):
        incidence = neighbor_incidence(SamplingWindow.full((5, 4)), four_nearest)
        eta = -0.22
        _, logdet = np.linalg.slogdet(np.eye(20) - eta * incidence.matrix.toarray())
        y = np.zeros(20)
        value = log_likelihood_gaussian(y, 0.0, eta, 1.0, incidence)
        assert value == pytest.approx(-10 * np.log(2 * np.pi) + 0.5 * logdet)

    def test_independent_case(self, four_nearest):
        incidence = neighbor_incidence(SamplingWindow.full((4, 4)), four_nearest)
        y = make_rng(2).normal(1.0, 2.0, size=16)
        expected = norm.logpdf(y, loc=1.0, scale=2.0).sum()
        assert log_likelihood_gaussian(y, 1.0, 0.0, 4.0, incidence) == pytest.approx(expected)

    def test_location_invariance(self, gaussian_field, four_nearest):
        incidence = neighbor_incidence(gaussian_field.window, four_nearest)
        shifted = GridData.from_array(gaussian_field.values + 3.0)
        base = log_likelihood_gaussian(gaussian_field, 0.1, 0.15, 1.2, incidence)
        assert log_likelihood_gaussian(shifted, 3.1, 0.15, 1.2, incidence) == pytest.approx(base)

    def test_outside_parameter_space(self, gaussian_field, four_nearest):
        incidence = neighbor_incidence(gaussian_field.window, four_nearest)
        with pytest.raises(ValueError):
            log_likelihood_gaussian(gaussian_field, 0.0, 0.26, 1.0, incidence)
        with pytest.raises(ValueError):
            log_likelihood_gaussian(gaussian_field, 0.0, 0.1, 0.0, incidence)


class TestMaximumLikelihood:
    """Test the ML fitter."""

    def test_result_shape(self, gaussian_field, four_nearest):
        result = fit_ml(gaussian_field, four_nearest)
        assert result.method == FitMethod.ML
        assert result.n_sites == 187
        assert result.tau2_hat > 0
        lower, upper = result.eta_bounds
        assert lower < result.eta_hat < upper
        assert result.eta_bounds == pytest.approx((-0.2563, 0.2563), abs=5e-5)

    def test_maximizes_likelihood(self, gaussian_field, four_nearest):
        incidence = neighbor_incidence(gaussian_field.window, four_nearest)
        result = fit_ml(gaussian_field, four_nearest, incidence=incidence)
        lower, upper = result.eta_bounds
        for eta in np.linspace(lower + 1e-3, upper - 1e-3, 101):
            value = log_likelihood_gaussian(gaussian_field, result.alpha_hat, eta, result.tau2_hat, incidence)
            assert value <= result.log_likelihood + 1e-6
        for d_alpha, scale in [(0.05, 1.0), (-0.05, 1.0), (0.0, 1.1), (0.0, 0.9)]:
            value = log_likelihood_gaussian(
                gaussian_field, result.alpha_hat + d_alpha, result.eta_hat, scale * result.tau2_hat, incidence
            )
            assert value <= result.log_likelihood + 1e-9

    def test_affine_equivariance(self, gaussian_field, four_nearest):
        base = fit_ml(gaussian_field, four_nearest)
        moved = fit_ml(GridData.from_array(5.0 + 2.0 * gaussian_field.values), four_nearest)
        assert moved.eta_hat == pytest.approx(base.eta_hat, abs=1e-5)
        assert moved.alpha_hat == pytest.approx(5.0 + 2.0 * base.alpha_hat, abs=1e-4)
        assert moved.tau2_hat == pytest.approx(4.0 * base.tau2_hat, rel=1e-4)

    def test_small_bias(self, four_nearest, cover4):
        model = GaussianMrfSpec(alpha=1.0, eta=0.15, tau2=2.0, template=four_nearest)
        fields = simulate(model, cover4, (20, 20), seed=99, n_fields=200, burn_in=200, spacing=10)
        incidence = neighbor_incidence(fields[0].window, four_nearest)
        estimates = np.array([fit_ml(f, four_nearest, incidence=incidence).eta_hat for f in fields])
        assert abs(estimates.mean() - 0.15) < 0.015

    def test_interior_only_fits_interior_sites(self, gaussian_field, four_nearest):
        interior = fit_ml(gaussian_field, four_nearest, EdgeRule.INTERIOR_ONLY)
        inside = interior_mask(gaussian_field.window, four_nearest)
        masked = GridData.from_array(np.where(inside, gaussian_field.values, np.nan))
        direct = fit_ml(masked, four_nearest)
        assert interior.n_sites == 9 * 15
        assert interior.eta_hat == pytest.approx(direct.eta_hat, abs=1e-9)
        assert interior.eta_bounds == pytest.approx(direct.eta_bounds)
        assert interior.eta_bounds[1] > fit_ml(gaussian_field, four_nearest).eta_bounds[1]

    def test_golden_section_search(self, monkeypatch):
        methods = []
        real = estimation.minimize_scalar

        def recording(*args, **kwargs):
            methods.append(kwargs["method"])
            return real(*args, **kwargs)

        monkeypatch.setattr(estimation, "minimize_scalar", recording)
        eta, _ = estimation._minimize_on(lambda x: (x - 0.1234567) ** 2, -0.25, 0.25)
        assert methods == ["golden"]
        assert eta == pytest.approx(0.1234567, abs=1e-6)
        # minimum beyond the interval: the edge cell has no bracket
        eta, _ = estimation._minimize_on(lambda x: (x - 1.0) ** 2, -0.25, 0.25)
        assert methods[-1] == "bounded"
        assert eta == pytest.approx(0.25, abs=1e-5)

    def test_unidentifiable(self, four_nearest):
        data = GridData.from_array([[1.0, np.nan, 2.0]])
        with pytest.raises(DataError):
            fit_ml(data, four_nearest)

    def test_falls_back_above_site_limit(self, gaussian_field, four_nearest, caplog):
        with caplog.at_level(logging.WARNING):
            result = fit(gaussian_field, four_nearest, FitMethod.ML, max_sites=100)
        assert result.method == FitMethod.PSEUDOLIKELIHOOD
        assert "falling back" in caplog.text

    def test_alias_names(self, gaussian_field, four_nearest):
        dumped = fit_ml(gaussian_field, four_nearest).model_dump(by_alias=True)
        assert {"alpha", "eta", "tau2", "logLik", "etaBounds", "boundaryFlag"} <= set(dumped)

    def test_result_rejects_eta_outside_bounds(self):
        with pytest.raises(ValidationError):
            FitResult(alpha=0.0, eta=0.3, tau2=1.0, logLik=0.0, etaBounds=(-0.25, 0.25), method=FitMethod.ML)


class TestPseudolikelihood:
    """Test the pseudolikelihood fitter."""

    def test_constant_field(self, four_nearest):
        with pytest.raises(DataError):
            fit_pseudolikelihood(GridData.from_array(np.full((5, 5), 2.0)), four_nearest)

    def test_close_to_ml(self, four_nearest, cover4):
        model = GaussianMrfSpec(alpha=0.0, eta=0.15, tau2=1.0, template=four_nearest)
        data = simulate(model, cover4, (30, 30), seed=5)[0]
        ml = fit_ml(data, four_nearest)
        pl = fit_pseudolikelihood(data, four_nearest)
        assert pl.method == FitMethod.PSEUDOLIKELIHOOD
        assert abs(pl.eta_hat - ml.eta_hat) < 0.06
        assert pl.tau2_hat == pytest.approx(ml.tau2_hat, rel=0.2)

    def test_interior_only_uses_fewer_sites(self, gaussian_field, four_nearest):
        full = fit_pseudolikelihood(gaussian_field, four_nearest)
        interior = fit_pseudolikelihood(gaussian_field, four_nearest, EdgeRule.INTERIOR_ONLY)
        assert full.n_sites == 187
        assert interior.n_sites == 9 * 15

    def test_reported_log_pseudolikelihood(self, gaussian_field, four_nearest):
        result = fit_pseudolikelihood(gaussian_field, four_nearest)
        n = result.n_sites
        assert result.log_likelihood == pytest.approx(-0.5 * n * (np.log(2 * np.pi * result.tau2_hat) + 1.0))

    def test_dispatch(self, gaussian_field, four_nearest):
        result = fit(gaussian_field, four_nearest, "pseudolikelihood")
        assert result.method == FitMethod.PSEUDOLIKELIHOOD


def test_eight_nearest_bounds():
    template = named_template("eight_nearest")
    bounds = eta_parameter_space(neighbor_incidence(SamplingWindow.full((30, 30)), template))
    assert -1.0 / 3.0 < bounds.lower < 0 < 1.0 / 8.0 < bounds.upper
