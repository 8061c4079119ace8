import numpy as np
import pytest
from dataclasses import replace

from factor_residuals import (
    DomainError,
    FeasibilityError,
    build_population_model,
    check_residual_identity,
    construct_exact_population,
    decompose_residuals,
    random_population_model,
    run_verification,
    verify_error_cross_covariance,
    verify_explained_cross_covariance,
    verify_factor_cross_covariance,
)
from factor_residuals.theorems import (
    construction_fidelity,
    default_verification_cases,
    verification_passed,
)
from conftest import random_zero_diagonal


def component_loadings_for(model, seed=0, m=1, scale=0.04):
    omega = random_zero_diagonal(model.p, seed=seed, scale=scale)
    return decompose_residuals(omega).component_loadings[:, :m]


@pytest.fixture(scope="module")
def model():
    return build_population_model(3, 0.4, 5)


class TestConstructExactPopulation:
    def test_zero_cross_covariances(self, model):
        N = component_loadings_for(model, m=2)
        population = construct_exact_population(
            model, N, np.zeros((3, 2)), np.zeros((15, 2)), n=300
        )
        assert construction_fidelity(population) < 1e-10
        # observed covariance carries the component part exactly
        X = population.X - population.X.mean(axis=0)
        observed = X.T @ X / population.n
        expected = (
            model.loadings @ model.factor_corr @ model.loadings.T
            + np.diag(model.uniquenesses)
            + N @ N.T
        )
        np.testing.assert_allclose(observed, expected, atol=1e-10)

    def test_nonzero_cross_covariances_hit_exactly(self, model):
        N = component_loadings_for(model, m=1)
        C_fu = np.array([[0.2], [-0.1], [0.05]])
        C_eu = np.full((15, 1), 0.02)
        population = construct_exact_population(model, N, C_fu, C_eu, n=200, seed=3)
        F = population.F - population.F.mean(axis=0)
        U = population.U - population.U.mean(axis=0)
        E = population.E - population.E.mean(axis=0)
        np.testing.assert_allclose(F.T @ U / population.n, C_fu, atol=1e-10)
        np.testing.assert_allclose(E.T @ U / population.n, C_eu, atol=1e-10)

    def test_infeasible_target_reports_minimum_eigenvalue(self, model):
        N = component_loadings_for(model, m=1)
        C_fu = np.array([[1.2], [0.0], [0.0]])  # correlation beyond 1
        with pytest.raises(FeasibilityError) as excinfo:
            construct_exact_population(model, N, C_fu, np.zeros((15, 1)), n=200)
        assert excinfo.value.min_eigenvalue < -1e-10

    def test_population_too_small(self, model):
        N = component_loadings_for(model, m=1)
        with pytest.raises(DomainError):
            construct_exact_population(
                model, N, np.zeros((3, 1)), np.zeros((15, 1)), n=model.p + model.q + 1
            )

    def test_x_assembled_from_scores(self, model):
        N = component_loadings_for(model, m=1)
        population = construct_exact_population(
            model, N, np.zeros((3, 1)), np.zeros((15, 1)), n=100
        )
        np.testing.assert_array_equal(
            population.X,
            population.F @ model.loadings.T + population.E + population.U @ N.T,
        )


class TestResidualIdentity:
    def test_holds_on_constructed_population(self, model):
        N = component_loadings_for(model, m=2)
        C_fu = np.array([[0.1, 0.0], [0.0, 0.05], [-0.08, 0.02]])
        population = construct_exact_population(model, N, C_fu, np.zeros((15, 2)), n=250)
        report = check_residual_identity(population, model, N)
        assert report.checks["residual-identity"] < 1e-8

    def test_reduces_to_component_part_without_cross_terms(self, model):
        N = component_loadings_for(model, m=1)
        population = construct_exact_population(
            model, N, np.zeros((3, 1)), np.zeros((15, 1)), n=250
        )
        X = population.X - population.X.mean(axis=0)
        omega_emp = (
            X.T @ X / population.n
            - model.loadings @ model.factor_corr @ model.loadings.T
            - np.diag(model.uniquenesses)
        )
        np.testing.assert_allclose(omega_emp, N @ N.T, atol=1e-8)

    def test_sensitive_to_perturbation(self, model):
        N = component_loadings_for(model, m=1)
        population = construct_exact_population(
            model, N, np.zeros((3, 1)), np.zeros((15, 1)), n=250
        )
        corrupted = population.X.copy()
        corrupted[0, 0] += 0.5
        report = check_residual_identity(
            replace(population, X=corrupted), model, N
        )
        assert report.checks["residual-identity"] > 1e-6

    def test_shortened_form_reported_and_large(self, model):
        N = component_loadings_for(model, m=1)
        population = construct_exact_population(
            model, N, np.zeros((3, 1)), np.zeros((15, 1)), n=250
        )
        report = check_residual_identity(population, model, N)
        assert report.diagnostics["shortened-form"] > 1e-3


class TestFactorCrossCovariance:
    def test_substitution_identity(self, model):
        N = component_loadings_for(model)
        report = verify_factor_cross_covariance(model, N)
        assert report.checks["factor-substitution"] < 1e-12

    def test_witness_exact_when_target_in_loading_span(self, model):
        weights = np.array([[0.3], [-0.2], [0.1]])
        N = model.loadings @ weights  # inside the loading span
        report = verify_factor_cross_covariance(model, N)
        assert report.diagnostics["witness-residual"] < 1e-12
        assert report.diagnostics["witness-identity"] < 1e-10
        assert report.diagnostics["witness-norm"] > 0.0

    def test_out_of_span_reports_nonzero_residual(self, model):
        N = component_loadings_for(model)
        # generic residual directions are not in the span of block loadings
        report = verify_factor_cross_covariance(model, N)
        assert report.diagnostics["witness-residual"] > 1e-6

    def test_zero_components_vacuous(self, model):
        report = verify_factor_cross_covariance(model, np.zeros((15, 1)))
        assert report.checks["factor-substitution"] == 0.0
        assert any("vacuous" in note for note in report.notes)


class TestErrorCrossCovariance:
    def test_substitution_identity(self, model):
        N = component_loadings_for(model)
        report = verify_error_cross_covariance(model, N)
        assert report.checks["error-substitution"] < 1e-12

    def test_feasible_population_confirms_empirically(self, model):
        N = component_loadings_for(model)
        report = verify_error_cross_covariance(model, N)
        assert report.feasible["condition-population"]
        assert report.checks["error-empirical"] < 1e-10
        assert report.checks["construction-fidelity"] < 1e-10

    def test_infeasible_condition_reported_not_raised(self, model):
        # components this large cannot coexist with the error variances
        N = component_loadings_for(model, scale=3.0)
        report = verify_error_cross_covariance(model, N)
        assert not report.feasible["condition-population"]
        assert report.diagnostics["condition-population-min-eigenvalue"] < -1e-10

    def test_zero_components_vacuous(self, model):
        report = verify_error_cross_covariance(model, np.zeros((15, 1)))
        assert report.checks["error-substitution"] == 0.0
        assert any("vacuous" in note for note in report.notes)


class TestExplainedCrossCovariance:
    def test_substitution_identity(self, model):
        N = component_loadings_for(model)
        report = verify_explained_cross_covariance(model, N)
        assert report.checks["explained-substitution"] < 1e-12

    def test_split_construction_realizes_combined_target(self, model):
        N = component_loadings_for(model)
        report = verify_explained_cross_covariance(model, N)
        assert report.feasible["split-population"]
        assert report.checks["explained-empirical"] < 1e-8
        assert report.diagnostics["combined-norm"] > 0.0

    def test_zero_components_vacuous(self, model):
        report = verify_explained_cross_covariance(model, np.zeros((15, 1)))
        assert report.checks["explained-substitution"] == 0.0
        assert any("vacuous" in note for note in report.notes)


class TestVerificationSuite:
    def test_default_cases_pass_gate(self):
        reports = run_verification(n=400)
        assert verification_passed(reports, gate=1e-6)
        names = {(case, report.name) for case, report in reports}
        assert ("three-factor-benchmark", "exact-construction") in names
        assert ("random-10x2", "explained-cross-covariance") in names

    def test_injected_perturbation_fails_gate(self):
        reports = run_verification(n=400, inject_perturbation=True)
        assert not verification_passed(reports, gate=1e-6)

    def test_cases_are_deterministic(self):
        one = default_verification_cases(seed=3)
        two = default_verification_cases(seed=3)
        for a, b in zip(one, two):
            np.testing.assert_array_equal(a.component_loadings, b.component_loadings)

    def test_random_case_uses_requested_shape(self):
        cases = default_verification_cases()
        by_name = {case.name: case for case in cases}
        assert by_name["random-10x2"].model.p == 10
        assert by_name["random-10x2"].model.q == 2
