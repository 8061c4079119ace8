"""Population factor models and their covariance algebra.

A population model fixes a loading matrix, factor correlations and
uniquenesses for unit-variance observed variables.  This module builds the
benchmark simple-structure populations, produces the correlation matrix a
model implies, and extracts the residual covariance structure a target
matrix carries beyond a model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_SYM_TOL = 1e-12


def _symmetrize(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + values.T)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric covariance matrix; ``is_correlation`` demands a unit diagonal."""

    values: np.ndarray
    is_correlation: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {values.shape}")
        if values.size and np.max(np.abs(values - values.T)) > _SYM_TOL:
            raise DomainError("matrix is not symmetric")
        if self.is_correlation and np.max(np.abs(np.diagonal(values) - 1.0)) > _SYM_TOL:
            raise DomainError("correlation matrix must have a unit diagonal")
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        return self.values.shape[0]


def as_matrix(matrix) -> np.ndarray:
    """Unwrap a CovarianceMatrix, or pass an array through."""
    if isinstance(matrix, CovarianceMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=float)


@dataclass(frozen=True)
class PopulationModel:
    """Common factor model for ``p`` unit-variance variables and ``q`` factors.

    ``loadings`` is p x q, ``factor_corr`` the q x q factor correlation
    matrix and ``uniquenesses`` the length-p vector of error variances.
    Observed variances must come out at exactly one:
    ``diag(loadings @ factor_corr @ loadings.T) + uniquenesses == 1``.
    """

    loadings: np.ndarray
    factor_corr: np.ndarray
    uniquenesses: np.ndarray

    def __post_init__(self) -> None:
        loadings = np.asarray(self.loadings, dtype=float)
        factor_corr = np.asarray(self.factor_corr, dtype=float)
        uniquenesses = np.asarray(self.uniquenesses, dtype=float)
        if loadings.ndim != 2:
            raise DomainError("loadings must be a p x q matrix")
        p, q = loadings.shape
        if q < 1 or p <= q:
            raise DomainError(f"need 1 <= q < p, got p={p}, q={q}")
        if factor_corr.shape != (q, q):
            raise DomainError("factor correlation matrix has the wrong shape")
        if np.max(np.abs(factor_corr - factor_corr.T)) > _SYM_TOL:
            raise DomainError("factor correlations must be symmetric")
        if np.max(np.abs(np.diagonal(factor_corr) - 1.0)) > _SYM_TOL:
            raise DomainError("factor correlations must have a unit diagonal")
        if np.linalg.eigvalsh(factor_corr)[0] < -1e-10:
            raise DomainError("factor correlations must be positive semidefinite")
        if uniquenesses.shape != (p,):
            raise DomainError("uniquenesses must be a length-p vector")
        if np.any(uniquenesses <= 0.0):
            raise DomainError("uniquenesses must be strictly positive")
        variances = np.sum((loadings @ factor_corr) * loadings, axis=1) + uniquenesses
        if np.max(np.abs(variances - 1.0)) > 1e-12:
            raise DomainError("observed variances must all equal one")
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "factor_corr", factor_corr)
        object.__setattr__(self, "uniquenesses", uniquenesses)

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def q(self) -> int:
        return self.loadings.shape[1]


def build_population_model(q: int, salient: float, vars_per_factor: int = 5) -> PopulationModel:
    """Simple-structure population: each variable loads ``salient`` on one factor.

    Variable ``i`` loads on factor ``i // vars_per_factor`` and on nothing
    else.  Factors are orthogonal and uniquenesses are ``1 - salient**2`` so
    every observed variable has unit variance.
    """
    if q < 1:
        raise DomainError("factor count must be at least 1")
    if vars_per_factor < 1:
        raise DomainError("vars_per_factor must be at least 1")
    if not 0.0 < salient < 1.0:
        raise DomainError("salient loading must lie strictly inside (0, 1)")
    p = q * vars_per_factor
    loadings = np.kron(np.eye(q), np.full((vars_per_factor, 1), float(salient)))
    uniquenesses = np.full(p, 1.0 - float(salient) ** 2)
    return PopulationModel(loadings, np.eye(q), uniquenesses)


def random_population_model(
    p: int, q: int, seed: int = 0, max_communality: float = 0.8
) -> PopulationModel:
    """Random orthogonal-factor population with mixed cross-loadings."""
    if q < 1 or p <= q:
        raise DomainError(f"need 1 <= q < p, got p={p}, q={q}")
    rng = np.random.default_rng(seed)
    loadings = rng.uniform(-0.2, 0.2, size=(p, q))
    loadings[np.arange(p), np.arange(p) % q] = rng.uniform(0.35, 0.75, size=p)
    communality = np.sum(loadings**2, axis=1)
    shrink = np.sqrt(max_communality / np.maximum(communality, max_communality))
    loadings *= shrink[:, None]
    uniquenesses = 1.0 - np.sum(loadings**2, axis=1)
    return PopulationModel(loadings, np.eye(q), uniquenesses)


def implied_covariance(model: PopulationModel) -> CovarianceMatrix:
    """Correlation matrix the model reproduces (unit diagonal by construction)."""
    values = model.loadings @ model.factor_corr @ model.loadings.T + np.diag(model.uniquenesses)
    values = _symmetrize(values)
    np.fill_diagonal(values, 1.0)
    return CovarianceMatrix(values, is_correlation=True)


def residual_matrix(target, loadings, uniquenesses, factor_corr=None) -> np.ndarray:
    """Target minus reproduced covariances, diagonal forced to exact zero."""
    target = as_matrix(target)
    loadings = np.asarray(loadings, dtype=float)
    if factor_corr is None:
        reproduced = loadings @ loadings.T
    else:
        reproduced = loadings @ np.asarray(factor_corr, dtype=float) @ loadings.T
    residual = target - reproduced - np.diag(np.asarray(uniquenesses, dtype=float))
    residual = _symmetrize(residual)
    # residual structure is purely off-diagonal; the model owns the diagonal
    np.fill_diagonal(residual, 0.0)
    return residual


def residual_covariance(target, model: PopulationModel) -> CovarianceMatrix:
    """Covariance left over once the model-implied part is removed."""
    values = as_matrix(target)
    if values.shape != (model.p, model.p):
        raise DomainError(
            f"target has shape {values.shape} but the model has p={model.p}"
        )
    return CovarianceMatrix(
        residual_matrix(values, model.loadings, model.uniquenesses, model.factor_corr)
    )
