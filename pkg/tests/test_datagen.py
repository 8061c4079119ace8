import numpy as np
import pytest

from factor_residuals import (
    DegenerateDataError,
    DomainError,
    Sample,
    build_population_model,
    generate_fixed_population,
    generate_sample,
    implied_covariance,
    sample_correlation,
    subsample,
)
from factor_residuals.datagen import (
    read_observations_csv,
    read_sample_csv,
    write_sample_csv,
)


def naive_correlation(X):
    """Two-pass pairwise oracle, deliberately loop-based."""
    n, p = X.shape
    means = [sum(X[:, j]) / n for j in range(p)]
    out = np.eye(p)
    for a in range(p):
        for b in range(a + 1, p):
            sa = sb = sab = 0.0
            for i in range(n):
                da = X[i, a] - means[a]
                db = X[i, b] - means[b]
                sa += da * da
                sb += db * db
                sab += da * db
            out[a, b] = out[b, a] = sab / np.sqrt(sa * sb)
    return out


class TestGenerateSample:
    def test_deterministic(self, table1_model):
        one = generate_sample(table1_model, 100, seed=9)
        two = generate_sample(table1_model, 100, seed=9)
        np.testing.assert_array_equal(one.X, two.X)
        np.testing.assert_array_equal(one.F, two.F)
        np.testing.assert_array_equal(one.E, two.E)

    def test_observed_scores_assembled_exactly(self, table1_model):
        sample = generate_sample(table1_model, 250, seed=3)
        np.testing.assert_array_equal(
            sample.X, sample.F @ table1_model.loadings.T + sample.E
        )

    def test_case_count_too_small(self, table1_model):
        with pytest.raises(DomainError):
            generate_sample(table1_model, table1_model.p, seed=0)

    def test_large_sample_matches_population_correlations(self, table1_model):
        n = 200_000
        sample = generate_sample(table1_model, n, seed=2024)
        corr = sample_correlation(sample).values
        sigma = implied_covariance(table1_model).values
        # Monte Carlo standard-error oracle: each correlation is within
        # three standard errors (1/sqrt(n)) of its population value
        assert np.max(np.abs(corr - sigma)) < 3.0 / np.sqrt(n)

    def test_error_variances_near_targets(self, table1_model):
        sample = generate_sample(table1_model, 100_000, seed=6)
        observed = sample.E.var(axis=0, ddof=1)
        np.testing.assert_allclose(observed, table1_model.uniquenesses, atol=0.02)


class TestFixedPopulation:
    def test_full_scale_population_row_count(self):
        model = build_population_model(1, 0.4, 5)
        population = generate_fixed_population(model, 900_000, seed=1)
        assert population.n == 900_000
        assert population.X.shape == (900_000, 5)

    def test_disjoint_subsamples_differ(self, table1_model):
        population = generate_fixed_population(table1_model, 2_000, seed=4)
        first = Sample(500, population.X[:500], population.F[:500], population.E[:500])
        second = Sample(500, population.X[500:1000], population.F[500:1000], population.E[500:1000])
        assert not np.allclose(
            sample_correlation(first).values, sample_correlation(second).values
        )

    def test_subsample_of_full_size_is_identity(self, table1_model):
        population = generate_fixed_population(table1_model, 400, seed=4)
        sub = subsample(population, 400, seed=11)
        np.testing.assert_array_equal(sub.X, population.X)
        np.testing.assert_array_equal(sub.F, population.F)

    def test_subsample_deterministic_and_aligned(self, table1_model):
        population = generate_fixed_population(table1_model, 1_000, seed=4)
        one = subsample(population, 200, seed=5)
        two = subsample(population, 200, seed=5)
        np.testing.assert_array_equal(one.X, two.X)
        # rows travel together: the defining equation still holds row-wise
        np.testing.assert_allclose(
            one.X, one.F @ table1_model.loadings.T + one.E, atol=1e-12
        )

    def test_subsample_too_large(self, table1_model):
        population = generate_fixed_population(table1_model, 100, seed=4)
        with pytest.raises(DomainError):
            subsample(population, 101, seed=0)


class TestSampleCorrelation:
    def test_matches_naive_two_pass_oracle(self, table1_model):
        sample = generate_sample(table1_model, 120, seed=8)
        fast = sample_correlation(sample).values
        slow = naive_correlation(sample.X)
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_unit_diagonal_exact(self, table1_model):
        corr = sample_correlation(generate_sample(table1_model, 50, seed=1))
        assert np.all(np.diagonal(corr.values) == 1.0)

    def test_identical_columns_correlate_perfectly(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=100)
        X = np.column_stack([x, x, rng.normal(size=100)])
        corr = sample_correlation(X).values
        assert corr[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonalized_columns_give_identity(self):
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(80, 4))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        corr = sample_correlation(q).values
        np.testing.assert_allclose(corr, np.eye(4), atol=1e-12)

    def test_zero_variance_column(self):
        X = np.column_stack([np.ones(30), np.arange(30.0)])
        with pytest.raises(DegenerateDataError):
            sample_correlation(X)

    def test_single_case_rejected(self):
        with pytest.raises(DomainError):
            sample_correlation(np.ones((1, 3)))


class TestSampleCsv:
    def test_roundtrip_exact(self, table1_model, tmp_path):
        sample = generate_sample(table1_model, 40, seed=12)
        path = tmp_path / "sample.csv"
        write_sample_csv(sample, path)
        back = read_sample_csv(path)
        np.testing.assert_array_equal(back.X, sample.X)
        np.testing.assert_array_equal(back.F, sample.F)
        np.testing.assert_array_equal(back.E, sample.E)

    def test_header_layout(self, table1_model, tmp_path):
        sample = generate_sample(table1_model, 20, seed=12)
        path = tmp_path / "sample.csv"
        write_sample_csv(sample, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:2] == ["x1", "x2"]
        assert header[15] == "f1"
        assert header[18] == "e1"

    def test_observations_reader_selects_x_columns(self, table1_model, tmp_path):
        sample = generate_sample(table1_model, 20, seed=12)
        path = tmp_path / "sample.csv"
        write_sample_csv(sample, path)
        X, names = read_observations_csv(path)
        assert names == [f"x{i + 1}" for i in range(15)]
        np.testing.assert_array_equal(X, sample.X)

    def test_observations_reader_takes_all_generic_columns(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n3,4\n")
        X, names = read_observations_csv(path)
        assert names == ["a", "b"]
        np.testing.assert_array_equal(X, [[1.0, 2.0], [3.0, 4.0]])

    def test_malformed_csv_rejected(self, tmp_path):
        ragged = tmp_path / "ragged.csv"
        ragged.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DomainError):
            read_observations_csv(ragged)
        textual = tmp_path / "text.csv"
        textual.write_text("a,b\n1,x\n")
        with pytest.raises(DomainError):
            read_observations_csv(textual)
        with pytest.raises(DomainError):
            read_observations_csv(tmp_path / "missing.csv")
