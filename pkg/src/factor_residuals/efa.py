"""Maximum-likelihood exploratory factor analysis with Varimax rotation.

The discrepancy between a correlation matrix and the factor-model covariance
is minimized by concentrating the loadings out: for fixed uniquenesses the
optimal loadings come from the top eigenpairs of the uniqueness-whitened
matrix, and a bounded quasi-Newton loop drives the uniquenesses.  Varimax is
the classical pairwise planar-rotation algorithm with Kaiser normalization.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from ._util import canonical_column_signs, format_number
from .errors import DegenerateDataError, DomainError
from .model import as_matrix

__all__ = [
    "FitOptions",
    "EfaSolution",
    "FactorMatching",
    "ml_discrepancy",
    "fit_ml",
    "varimax",
    "varimax_criterion",
    "tucker_congruence",
    "match_factors",
    "write_solutions_csv",
]


@dataclass(frozen=True)
class FitOptions:
    """Convergence controls for the uniqueness optimization.

    ``tol`` bounds the discrepancy decrease at exit.  The optimizer also
    polishes the projected gradient below 1e-7, which keeps the diagonal of
    the reproduced matrix within 1e-6 of the input diagonal at interior
    solutions; a plain discrepancy-decrease stop can leave it slightly wider.
    """

    tol: float = 1e-9
    max_iter: int = 500
    psi_floor: float = 0.005


@dataclass(frozen=True)
class EfaSolution:
    """Estimated loadings and uniquenesses with fit and boundary diagnostics.

    ``rotation`` records the orthogonal transform already applied to
    ``loadings`` (identity straight out of the fit).  ``heywood`` flags
    variables whose uniqueness was clamped at the lower boundary.
    """

    loadings: np.ndarray
    uniquenesses: np.ndarray
    fit: float
    iterations: int
    converged: bool
    heywood: np.ndarray
    rotation: np.ndarray

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def q(self) -> int:
        return self.loadings.shape[1]

    def rotated(self, loadings: np.ndarray, rotation: np.ndarray) -> "EfaSolution":
        """Same solution with an additional orthogonal rotation applied."""
        return replace(self, loadings=loadings, rotation=self.rotation @ rotation)


def _cholesky_or_raise(matrix: np.ndarray, label: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise DegenerateDataError(f"{label} is not positive definite") from None


def ml_discrepancy(corr, loadings, uniquenesses) -> float:
    """Likelihood discrepancy between ``corr`` and the model covariance.

    ``log det(S) + trace(R S^-1) - log det(R) - p`` with
    ``S = loadings @ loadings.T + diag(uniquenesses)``; zero exactly when the
    model covariance reproduces ``corr``.
    """
    R = as_matrix(corr)
    loadings = np.asarray(loadings, dtype=float)
    psi2 = np.asarray(uniquenesses, dtype=float)
    p = R.shape[0]
    sigma = loadings @ loadings.T + np.diag(psi2)
    chol_r = _cholesky_or_raise(R, "input matrix")
    chol_s = _cholesky_or_raise(sigma, "model covariance")
    logdet_r = 2.0 * float(np.sum(np.log(np.diagonal(chol_r))))
    logdet_s = 2.0 * float(np.sum(np.log(np.diagonal(chol_s))))
    trace = float(np.trace(np.linalg.solve(sigma, R)))
    return logdet_s + trace - logdet_r - p


def _concentrated_fit(psi2: np.ndarray, R: np.ndarray, q: int):
    """Discrepancy profiled over the loadings, for fixed uniquenesses.

    Returns ``(value, gradient, loadings)``.  The optimal loadings come from
    the top-q eigenpairs of ``diag(psi)^-1 R diag(psi)^-1`` as
    ``diag(psi) G_q max(T_q - I, 0)^(1/2)``.
    """
    p = R.shape[0]
    inv_root = 1.0 / np.sqrt(psi2)
    whitened = R * np.outer(inv_root, inv_root)
    values, vectors = np.linalg.eigh(whitened)  # ascending
    tail = values[: p - q]
    value = float(np.sum(tail - np.log(tail) - 1.0))
    top = values[p - q :][::-1]
    top_vectors = vectors[:, p - q :][:, ::-1]
    loadings = np.sqrt(psi2)[:, None] * top_vectors * np.sqrt(np.maximum(top - 1.0, 0.0))
    sigma_diag = np.sum(loadings**2, axis=1) + psi2
    gradient = (sigma_diag - np.diagonal(R)) / psi2**2
    return value, gradient, loadings


def fit_ml(corr, q: int, opts: FitOptions = FitOptions()) -> EfaSolution:
    """Fit a ``q``-factor model to a correlation matrix by maximum likelihood.

    Parameters
    ----------
    corr : CovarianceMatrix or ndarray
        Positive-definite correlation matrix.
    q : int
        Number of factors, ``1 <= q < p``.
    opts : FitOptions
        Convergence tolerance on the discrepancy decrease, iteration cap and
        the uniqueness floor.

    Returns
    -------
    EfaSolution
        The unrotated canonical solution.  Non-convergence and boundary
        uniquenesses are flagged on the solution, never raised: simulation
        harnesses need to tally those outcomes.
    """
    R = as_matrix(corr)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {R.shape}")
    p = R.shape[0]
    if np.max(np.abs(R - R.T)) > 1e-10:
        raise DomainError("correlation matrix must be symmetric")
    if np.max(np.abs(np.diagonal(R) - 1.0)) > 1e-8:
        raise DomainError("fit_ml expects a correlation matrix (unit diagonal)")
    if not 1 <= q < p:
        raise DomainError(f"need 1 <= q < p, got q={q}, p={p}")
    _cholesky_or_raise(R, "correlation matrix")

    # start at 1 - squared multiple correlation of each variable
    start = np.clip(1.0 / np.diagonal(np.linalg.inv(R)), opts.psi_floor, 1.0)

    last_value = [np.inf]

    def objective(psi2):
        value, gradient, _ = _concentrated_fit(psi2, R, q)
        last_value[0] = value
        return value, gradient

    # the final line-search evaluation is at the accepted iterate, so the
    # last objective value seen before each callback belongs to it
    trace_values: list[float] = []

    def track(_psi2):
        trace_values.append(last_value[0])

    result = optimize.minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(opts.psi_floor, 1.0)] * p,
        callback=track,
        options={
            "maxiter": opts.max_iter,
            "ftol": min(opts.tol * 1e-2, 1e-11),
            "gtol": 1e-7,
        },
    )
    # the line search only accepts decreasing steps; an increase means a bug
    if any(b - a > 1e-10 for a, b in zip(trace_values, trace_values[1:])):
        raise RuntimeError("discrepancy increased across outer iterations")

    psi2 = np.clip(result.x, opts.psi_floor, 1.0)
    _, _, loadings = _concentrated_fit(psi2, R, q)
    loadings = canonical_column_signs(loadings)
    return EfaSolution(
        loadings=loadings,
        uniquenesses=psi2,
        fit=ml_discrepancy(R, loadings, psi2),
        iterations=int(result.nit),
        converged=bool(result.success),
        heywood=psi2 <= opts.psi_floor + 1e-12,
        rotation=np.eye(q),
    )


def _row_normalized(loadings: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(loadings**2, axis=1))
    return loadings / np.where(norms > 0.0, norms, 1.0)[:, None]


def varimax_criterion(loadings, kaiser_normalize: bool = True) -> float:
    """Sum over factors of the variance of the squared (normalized) loadings."""
    A = np.asarray(loadings, dtype=float)
    if kaiser_normalize:
        A = _row_normalized(A)
    return float(np.sum((A**2).var(axis=0)))


def varimax(
    loadings,
    kaiser_normalize: bool = True,
    tol: float = 1e-12,
    max_sweeps: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Varimax rotation by pairwise planar angle sweeps.

    Parameters
    ----------
    loadings : ndarray
        p x q loading matrix.
    kaiser_normalize : bool
        Rotate row-normalized loadings (the normalization is undone on exit).
    tol : float
        Stop once a full sweep improves the criterion by less than this.
    max_sweeps : int
        Cap on full sweeps over all column pairs.

    Returns
    -------
    (rotated, rotation)
        ``rotated = loadings @ rotation`` with ``rotation`` orthogonal.  Each
        column is flipped so its largest-magnitude loading is positive.
        ``q == 1`` returns the input unchanged.
    """
    L = np.asarray(loadings, dtype=float)
    if L.ndim != 2 or L.shape[1] < 1:
        raise DomainError("loadings must be a p x q matrix with q >= 1")
    p, q = L.shape
    if q == 1:
        return L.copy(), np.eye(1)

    A = _row_normalized(L) if kaiser_normalize else L.copy()
    rotation = np.eye(q)
    previous = np.sum((A**2).var(axis=0))
    for _ in range(max_sweeps):
        for i in range(q - 1):
            for j in range(i + 1, q):
                x = A[:, i]
                y = A[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                su = float(u.sum())
                sv = float(v.sum())
                numerator = 2.0 * float(u @ v) - 2.0 * su * sv / p
                denominator = float(u @ u - v @ v) - (su**2 - sv**2) / p
                if abs(numerator) < 1e-15 and abs(denominator) < 1e-15:
                    continue
                angle = 0.25 * float(np.arctan2(numerator, denominator))
                if abs(angle) < 1e-15:
                    continue
                cos, sin = np.cos(angle), np.sin(angle)
                new_i = cos * x + sin * y
                A[:, j] = cos * y - sin * x  # rhs evaluates before the write
                A[:, i] = new_i
                ri = rotation[:, i]
                rj = rotation[:, j]
                new_ri = cos * ri + sin * rj
                rotation[:, j] = cos * rj - sin * ri
                rotation[:, i] = new_ri
        current = np.sum((A**2).var(axis=0))
        if current - previous < tol:
            break
        previous = current

    rotated = L @ rotation
    anchor = np.argmax(np.abs(rotated), axis=0)
    signs = np.sign(rotated[anchor, np.arange(q)])
    signs[signs == 0] = 1.0
    return rotated * signs, rotation * signs


def tucker_congruence(a, b) -> float:
    """Cosine between two loading columns (zero when either is all zero)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


@dataclass(frozen=True)
class FactorMatching:
    """Column permutation and reflections aligning estimated factors to targets.

    ``permutation[k]`` is the estimated column matched to target column ``k``
    and ``signs[k]`` the reflection making the matched congruence positive.
    """

    permutation: np.ndarray
    signs: np.ndarray
    congruences: np.ndarray

    def apply(self, loadings: np.ndarray) -> np.ndarray:
        loadings = np.asarray(loadings, dtype=float)
        return loadings[:, self.permutation] * self.signs


def match_factors(estimated, target) -> FactorMatching:
    """Greedy one-to-one assignment maximizing absolute Tucker congruence."""
    est = np.asarray(estimated, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if est.shape != tgt.shape:
        raise DomainError(f"shape mismatch: {est.shape} vs {tgt.shape}")
    q = est.shape[1]
    table = np.array(
        [[tucker_congruence(est[:, i], tgt[:, j]) for j in range(q)] for i in range(q)]
    )
    permutation = np.zeros(q, dtype=int)
    signs = np.ones(q)
    congruences = np.zeros(q)
    remaining = np.abs(table).copy()
    for _ in range(q):
        i, j = np.unravel_index(int(np.argmax(remaining)), remaining.shape)
        permutation[j] = i
        signs[j] = -1.0 if table[i, j] < 0 else 1.0
        congruences[j] = abs(table[i, j])
        remaining[i, :] = -1.0
        remaining[:, j] = -1.0
    return FactorMatching(permutation=permutation, signs=signs, congruences=congruences)


def write_solutions_csv(solutions, path) -> None:
    """One row per fit: fit statistics, then loadings and uniquenesses."""
    solutions = list(solutions)
    if not solutions:
        raise DomainError("no solutions to write")
    p, q = solutions[0].p, solutions[0].q
    header = ["fit", "iterations", "converged", "heywood_count"]
    header += [f"l{i + 1}_{j + 1}" for i in range(p) for j in range(q)]
    header += [f"psi2_{i + 1}" for i in range(p)]
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for sol in solutions:
            row = [
                format_number(sol.fit),
                str(sol.iterations),
                format_number(sol.converged),
                str(int(np.sum(sol.heywood))),
            ]
            row += [format_number(v) for v in sol.loadings.ravel()]
            row += [format_number(v) for v in sol.uniquenesses]
            writer.writerow(row)
