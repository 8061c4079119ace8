import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from factor_residuals import (
    DegenerateDataError,
    DomainError,
    NoComponentsError,
    Sample,
    build_population_model,
    component_factor_correlations,
    component_scores,
    construct_exact_population,
    decompose_residuals,
)
from factor_residuals.residuals import (
    DIRECT_PROJECTION,
    TRUE_SCORES,
    decompose_deviation_covariance,
    standardized_scores,
    true_score_deviations,
)
from conftest import random_zero_diagonal


class TestDecomposeResiduals:
    def test_zero_matrix_has_no_components(self):
        decomposition = decompose_residuals(np.zeros((5, 5)))
        assert decomposition.m == 0
        assert decomposition.component_loadings.shape == (5, 0)

    def test_two_by_two_closed_form(self):
        c = 0.3
        omega = np.array([[0.0, c], [c, 0.0]])
        decomposition = decompose_residuals(omega)
        np.testing.assert_allclose(decomposition.eigenvalues, [c, -c], atol=1e-12)
        assert decomposition.m == 1
        expected_loading = np.sqrt(c / 2.0)
        np.testing.assert_allclose(
            decomposition.component_loadings[:, 0], expected_loading, atol=1e-12
        )
        np.testing.assert_allclose(
            decomposition.component_loadings @ decomposition.component_loadings.T,
            np.full((2, 2), c / 2.0),
            atol=1e-12,
        )

    def test_three_by_three_matches_characteristic_polynomial(self):
        a, b, c = 0.21, -0.34, 0.15
        omega = np.array([[0.0, a, b], [a, 0.0, c], [b, c, 0.0]])
        decomposition = decompose_residuals(omega)
        # char poly of a zero-diagonal 3x3: l^3 - (a^2+b^2+c^2) l - 2abc = 0
        roots = np.sort(np.roots([1.0, 0.0, -(a * a + b * b + c * c), -2 * a * b * c]))[::-1]
        np.testing.assert_allclose(decomposition.eigenvalues, roots.real, atol=1e-10)
        # eigenvector residuals, independent of how eigh orders things
        for k in range(3):
            v = decomposition.eigenvectors[:, k]
            lam = decomposition.eigenvalues[k]
            assert np.max(np.abs(omega @ v - lam * v)) < 1e-10

    @given(st.integers(0, 10_000), st.integers(2, 9))
    def test_zero_trace_and_component_counts(self, seed, p):
        omega = random_zero_diagonal(p, seed=seed)
        decomposition = decompose_residuals(omega)
        assert abs(decomposition.eigenvalues.sum()) < 1e-10
        if np.any(omega != 0.0):
            # zero trace forces at least one positive and one negative eigenvalue
            assert decomposition.m >= 1
            assert decomposition.eigenvalues[-1] < 0.0
        vectors = decomposition.eigenvectors
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(p), atol=1e-10)

    @given(st.integers(0, 10_000))
    def test_positive_part_reconstruction(self, seed):
        omega = random_zero_diagonal(7, seed=seed)
        decomposition = decompose_residuals(omega)
        m = decomposition.m
        expected = (
            decomposition.eigenvectors[:, :m]
            * decomposition.eigenvalues[:m]
        ) @ decomposition.eigenvectors[:, :m].T
        np.testing.assert_allclose(
            decomposition.component_loadings @ decomposition.component_loadings.T,
            expected,
            atol=1e-10,
        )

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(DomainError):
            decompose_residuals(np.eye(3))

    def test_rejects_asymmetric(self):
        omega = np.array([[0.0, 0.2], [0.1, 0.0]])
        with pytest.raises(DomainError):
            decompose_residuals(omega)

    def test_descending_order(self):
        omega = random_zero_diagonal(8, seed=3)
        decomposition = decompose_residuals(omega)
        assert np.all(np.diff(decomposition.eigenvalues) <= 1e-15)


class TestComponentScores:
    def make_population(self, m=2, seed=0):
        model = build_population_model(3, 0.4, 5)
        omega = random_zero_diagonal(model.p, seed=seed, scale=0.03)
        loadings = decompose_residuals(omega).component_loadings[:, :m]
        population = construct_exact_population(
            model,
            loadings,
            np.zeros((model.q, m)),
            np.zeros((model.p, m)),
            n=400,
            seed=seed,
        )
        sample = Sample(population.n, population.X, population.F, population.E)
        return model, loadings, population, sample

    def test_roundtrip_recovers_constructed_scores(self):
        model, loadings, population, sample = self.make_population()
        scores = component_scores(
            loadings, sample, model.loadings, TRUE_SCORES, standardize=False
        )
        np.testing.assert_allclose(scores.scores, population.U, atol=1e-10)

    def test_single_component_scalar_formula(self):
        model, loadings, population, sample = self.make_population(m=1, seed=4)
        scores = component_scores(
            loadings, sample, model.loadings, TRUE_SCORES, standardize=False
        )
        deviations = sample.X - sample.F @ model.loadings.T - sample.E
        expected = (deviations @ loadings[:, 0]) / float(loadings[:, 0] @ loadings[:, 0])
        np.testing.assert_allclose(scores.scores[:, 0], expected, atol=1e-12)

    def test_no_components_error(self, table1_model):
        sample = Sample(10, np.random.default_rng(0).normal(size=(10, 15)),
                        np.zeros((10, 3)), np.zeros((10, 15)))
        with pytest.raises(NoComponentsError):
            component_scores(np.zeros((15, 0)), sample, table1_model.loadings)

    def test_unknown_strategy(self, table1_model):
        sample = Sample(10, np.random.default_rng(0).normal(size=(10, 15)),
                        np.zeros((10, 3)), np.zeros((10, 15)))
        with pytest.raises(DomainError):
            component_scores(np.ones((15, 1)), sample, table1_model.loadings, "nope")

    def test_direct_projection_ignores_true_scores(self, table1_model):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 15))
        a = Sample(60, X, rng.normal(size=(60, 3)), rng.normal(size=(60, 15)))
        b = Sample(60, X, np.zeros((60, 3)), np.zeros((60, 15)))
        N = np.ones((15, 1))
        ua = component_scores(N, a, table1_model.loadings, DIRECT_PROJECTION)
        ub = component_scores(N, b, table1_model.loadings, DIRECT_PROJECTION)
        np.testing.assert_array_equal(ua.scores, ub.scores)


class TestDeviationDecomposition:
    def test_eigenvalues_nonnegative_and_reconstruct(self):
        rng = np.random.default_rng(9)
        deviations = rng.normal(size=(120, 6)) * 0.1
        decomposition = decompose_deviation_covariance(deviations)
        assert decomposition.eigenvalues[-1] > -1e-12
        reconstructed = (
            decomposition.eigenvectors * decomposition.eigenvalues
        ) @ decomposition.eigenvectors.T
        np.testing.assert_allclose(reconstructed, decomposition.covariance, atol=1e-12)

    def test_matches_true_score_deviation_definition(self, table1_model):
        from factor_residuals import generate_sample

        sample = generate_sample(table1_model, 200, seed=21)
        deviations = true_score_deviations(sample, table1_model.loadings)
        manual = standardized_scores(sample.X) - sample.F @ table1_model.loadings.T - sample.E
        np.testing.assert_array_equal(deviations, manual)

    def test_component_scores_accept_deviation_decomposition(self, table1_model):
        from factor_residuals import generate_sample

        sample = generate_sample(table1_model, 200, seed=22)
        deviations = true_score_deviations(sample, table1_model.loadings)
        decomposition = decompose_deviation_covariance(deviations)
        scores = component_scores(decomposition, sample, table1_model.loadings)
        # projection onto the component basis standardizes the variances
        variances = scores.scores.var(axis=0, ddof=1)
        np.testing.assert_allclose(variances[0], 1.0, atol=0.1)

    def test_too_few_rows(self):
        with pytest.raises(DomainError):
            decompose_deviation_covariance(np.ones((1, 4)))


class TestComponentFactorCorrelations:
    def test_copy_of_factor_correlates_perfectly(self):
        rng = np.random.default_rng(1)
        F = rng.normal(size=(200, 3))
        U = F[:, [0]].copy()
        corr = component_factor_correlations(U, F)
        assert corr[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_scores_uncorrelated(self):
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(100, 4))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        corr = component_factor_correlations(q[:, :1], q[:, 1:])
        np.testing.assert_allclose(corr, 0.0, atol=1e-10)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        corr = component_factor_correlations(
            rng.normal(size=(50, 2)), rng.normal(size=(50, 3))
        )
        assert np.all(corr >= -1.0) and np.all(corr <= 1.0)

    def test_case_count_mismatch(self):
        with pytest.raises(DomainError):
            component_factor_correlations(np.ones((5, 1)), np.ones((6, 1)))

    def test_zero_variance_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(DegenerateDataError):
            component_factor_correlations(np.ones((50, 1)), rng.normal(size=(50, 2)))
