"""Principal components of residual correlation structure.

A zero-diagonal residual matrix has eigenvalues summing to zero, so its
leading components carry whatever correlation structure the factor model
left behind.  The component loading matrix spans the positive-eigenvalue
part; component scores project case-level deviations onto it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import canonical_column_signs
from .datagen import Sample
from .errors import DegenerateDataError, DomainError, NoComponentsError
from .model import as_matrix

__all__ = [
    "POSITIVE_EIGENVALUE_EPS",
    "TRUE_SCORES",
    "DIRECT_PROJECTION",
    "STRATEGIES",
    "ResidualDecomposition",
    "DeviationDecomposition",
    "ComponentScores",
    "decompose_residuals",
    "standardized_scores",
    "true_score_deviations",
    "decompose_deviation_covariance",
    "component_scores",
    "component_factor_correlations",
]

POSITIVE_EIGENVALUE_EPS = 1e-12

# scoring strategies: remove the model-implied part built from the generating
# scores before projecting, or project the standardized observations directly
TRUE_SCORES = "true-scores"
DIRECT_PROJECTION = "direct-projection"
STRATEGIES = (TRUE_SCORES, DIRECT_PROJECTION)


@dataclass(frozen=True)
class ResidualDecomposition:
    """Eigenstructure of a zero-diagonal residual matrix.

    ``component_loadings`` is built from the positive eigenpairs so that
    ``component_loadings @ component_loadings.T`` reproduces the
    positive-eigenvalue part of the residual matrix exactly.
    """

    residual: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns
    m: int  # count of positive eigenvalues
    component_loadings: np.ndarray  # p x m


@dataclass(frozen=True)
class ComponentScores:
    scores: np.ndarray  # n x m
    strategy: str


def decompose_residuals(residual) -> ResidualDecomposition:
    """Full symmetric eigendecomposition, eigenvalues sorted descending."""
    omega = as_matrix(residual)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {omega.shape}")
    if np.max(np.abs(omega - omega.T)) > 1e-10:
        raise DomainError("residual matrix must be symmetric")
    if np.max(np.abs(np.diagonal(omega))) > 1e-10:
        raise DomainError("residual matrix must have a zero diagonal")
    values, vectors = np.linalg.eigh(omega)
    values = values[::-1]
    vectors = vectors[:, ::-1]
    if abs(float(values.sum())) > 1e-10:
        raise RuntimeError("eigenvalues of a zero-diagonal matrix must sum to zero")
    vectors = canonical_column_signs(vectors)
    m = int(np.sum(values > POSITIVE_EIGENVALUE_EPS))
    component_loadings = vectors[:, :m] * np.sqrt(values[:m])
    return ResidualDecomposition(
        residual=omega,
        eigenvalues=values,
        eigenvectors=vectors,
        m=m,
        component_loadings=component_loadings,
    )


def standardized_scores(X: np.ndarray) -> np.ndarray:
    """Columnwise z-scores with the n-1 denominator."""
    X = np.asarray(X, dtype=float)
    centered = X - X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if not np.all(np.isfinite(sd)) or np.any(sd <= 0.0):
        raise DegenerateDataError("zero-variance column; cannot standardize")
    return centered / sd


def true_score_deviations(sample: Sample, loadings_hat, standardize: bool = True) -> np.ndarray:
    """Per-case deviations ``z - F @ loadings_hat.T - E``.

    The estimated loadings must be aligned with the generating factors
    (matched column order and signs) for the model-implied part to cancel.
    """
    Z = standardized_scores(sample.X) if standardize else np.asarray(sample.X, dtype=float)
    return Z - sample.F @ np.asarray(loadings_hat, dtype=float).T - sample.E


@dataclass(frozen=True)
class DeviationDecomposition:
    """Principal components of the covariance of per-case deviation scores.

    The sample counterpart of decomposing residuals at the score level: in a
    population whose observations carry an exact component part, this
    covariance equals the positive-eigenvalue reconstruction of the residual
    matrix, so its leading eigenvalue is directly comparable to the leading
    positive residual eigenvalue.
    """

    covariance: np.ndarray
    eigenvalues: np.ndarray  # descending, all >= 0 up to roundoff
    eigenvectors: np.ndarray
    m: int
    component_loadings: np.ndarray  # p x m


def decompose_deviation_covariance(deviations: np.ndarray) -> DeviationDecomposition:
    """PCA of the (n-1 divisor) covariance of deviation scores."""
    D = np.asarray(deviations, dtype=float)
    if D.ndim != 2 or D.shape[0] < 2:
        raise DomainError("deviations must be an n x p matrix with n >= 2")
    centered = D - D.mean(axis=0)
    covariance = centered.T @ centered / (D.shape[0] - 1)
    covariance = 0.5 * (covariance + covariance.T)
    values, vectors = np.linalg.eigh(covariance)
    values = values[::-1]
    vectors = canonical_column_signs(vectors[:, ::-1])
    m = int(np.sum(values > POSITIVE_EIGENVALUE_EPS))
    component_loadings = vectors[:, :m] * np.sqrt(values[:m])
    return DeviationDecomposition(
        covariance=covariance,
        eigenvalues=values,
        eigenvectors=vectors,
        m=m,
        component_loadings=component_loadings,
    )


def component_scores(
    decomposition,
    sample: Sample,
    loadings_hat,
    strategy: str = TRUE_SCORES,
    standardize: bool = True,
) -> ComponentScores:
    """Scores of the residual components for every case.

    ``true-scores`` removes the model-implied part, built from the estimated
    loadings and the sample's generating factor and error scores, before
    projecting; it inverts the component decomposition exactly on data that
    were assembled from known component scores.  ``direct-projection`` skips
    the unobservable terms and projects the observations themselves, which is
    all that is available outside a simulation.
    """
    if isinstance(decomposition, (ResidualDecomposition, DeviationDecomposition)):
        N = decomposition.component_loadings
    else:
        N = np.asarray(decomposition, dtype=float)
    if N.ndim != 2:
        raise DomainError("component loadings must be a p x m matrix")
    if N.shape[1] == 0:
        raise NoComponentsError("no positive residual eigenvalues; nothing to score")
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown scoring strategy {strategy!r}")
    if strategy == TRUE_SCORES:
        deviations = true_score_deviations(sample, loadings_hat, standardize)
    else:
        deviations = standardized_scores(sample.X) if standardize else np.asarray(sample.X, dtype=float)
    gram = N.T @ N
    try:
        scores = np.linalg.solve(gram, N.T @ deviations.T).T
    except np.linalg.LinAlgError:
        raise DegenerateDataError("component loadings are rank deficient") from None
    return ComponentScores(scores=scores, strategy=strategy)


def component_factor_correlations(scores, factor_scores) -> np.ndarray:
    """Pearson correlations between component and factor scores (m x q)."""
    U = scores.scores if isinstance(scores, ComponentScores) else np.asarray(scores, dtype=float)
    F = np.asarray(factor_scores, dtype=float)
    if U.shape[0] != F.shape[0]:
        raise DomainError(f"case counts differ: {U.shape[0]} vs {F.shape[0]}")
    uc = U - U.mean(axis=0)
    fc = F - F.mean(axis=0)
    un = np.linalg.norm(uc, axis=0)
    fn = np.linalg.norm(fc, axis=0)
    if np.any(un <= 0.0) or np.any(fn <= 0.0):
        raise DegenerateDataError("zero-variance column; correlations are undefined")
    return np.clip((uc.T @ fc) / np.outer(un, fn), -1.0, 1.0)
