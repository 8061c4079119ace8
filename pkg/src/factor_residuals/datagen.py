"""Case-level data generation for population factor models.

Samples are multivariate normal.  Observed scores are assembled exactly as
``F @ loadings.T + E`` so the generating factor and error scores stay
available for score-level analyses.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import format_number
from .errors import DegenerateDataError, DomainError
from .model import CovarianceMatrix, PopulationModel

__all__ = [
    "Sample",
    "generate_sample",
    "generate_fixed_population",
    "subsample",
    "sample_correlation",
    "write_sample_csv",
    "read_sample_csv",
    "read_observations_csv",
]


@dataclass(frozen=True)
class Sample:
    """Observed scores together with the generating factor and error scores."""

    n: int
    X: np.ndarray  # n x p observed scores
    F: np.ndarray  # n x q common factor scores
    E: np.ndarray  # n x p error scores
    seed: object = None


def generate_sample(model: PopulationModel, n: int, seed) -> Sample:
    """Draw ``n`` cases from the model.

    Factor scores are standard normal with correlation ``model.factor_corr``,
    error scores independent normal with variances ``model.uniquenesses``.
    The same seed reproduces the sample bit for bit.
    """
    if n < model.p + 1:
        raise DomainError(f"need n >= p + 1 = {model.p + 1} cases, got {n}")
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, model.q)) @ np.linalg.cholesky(model.factor_corr).T
    E = rng.standard_normal((n, model.p)) * np.sqrt(model.uniquenesses)
    X = F @ model.loadings.T + E
    return Sample(n=n, X=X, F=F, E=E, seed=seed)


def generate_fixed_population(model: PopulationModel, n_pop: int, seed) -> Sample:
    """One finite population to draw subsamples from."""
    return generate_sample(model, n_pop, seed)


def subsample(population: Sample, n: int, seed) -> Sample:
    """Rows drawn without replacement; X, F and E rows stay aligned."""
    if n > population.n:
        raise DomainError(f"cannot draw {n} cases from a population of {population.n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(population.n, size=n, replace=False))
    return Sample(n=n, X=population.X[idx], F=population.F[idx], E=population.E[idx], seed=seed)


def sample_correlation(sample) -> CovarianceMatrix:
    """Pearson correlations of the observed scores, with an exact unit diagonal."""
    X = sample.X if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise DomainError("need at least two cases for correlations")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    sd = np.sqrt(np.diagonal(cov))
    if not np.all(np.isfinite(sd)) or np.any(sd <= 0.0):
        raise DegenerateDataError("zero-variance column; correlations are undefined")
    values = cov / np.outer(sd, sd)
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return CovarianceMatrix(values, is_correlation=True)


def _sample_header(p: int, q: int) -> list[str]:
    return (
        [f"x{j + 1}" for j in range(p)]
        + [f"f{j + 1}" for j in range(q)]
        + [f"e{j + 1}" for j in range(p)]
    )


def write_sample_csv(sample: Sample, path) -> None:
    """Export a sample with columns x1..xp, f1..fq, e1..ep."""
    p = sample.X.shape[1]
    q = sample.F.shape[1]
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_sample_header(p, q))
        for i in range(sample.n):
            row = np.concatenate([sample.X[i], sample.F[i], sample.E[i]])
            writer.writerow([format_number(v) for v in row])


def read_sample_csv(path) -> Sample:
    """Read a sample exported by :func:`write_sample_csv`."""
    values, names = _read_numeric_csv(path)
    p = sum(1 for name in names if name.startswith("x"))
    q = sum(1 for name in names if name.startswith("f"))
    if p == 0 or q == 0 or names != _sample_header(p, q):
        raise DomainError(f"{path}: not a sample export (header {names[:6]}...)")
    return Sample(
        n=values.shape[0],
        X=values[:, :p],
        F=values[:, p : p + q],
        E=values[:, p + q :],
        seed=None,
    )


def read_observations_csv(path) -> tuple[np.ndarray, list[str]]:
    """Numeric CSV with a header row, for analysis of raw data.

    When the header carries x1..xp columns (our sample export format) only
    those are used, so exported samples can be analyzed directly without the
    generating scores leaking in.  Otherwise every column is treated as an
    observed variable.
    """
    values, names = _read_numeric_csv(path)
    x_names = [name for name in names if len(name) > 1 and name[0] == "x" and name[1:].isdigit()]
    if x_names and len(x_names) < len(names):
        keep = [i for i, name in enumerate(names) if name in set(x_names)]
        return values[:, keep], [names[i] for i in keep]
    return values, names


def _read_numeric_csv(path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as err:
        raise DomainError(f"cannot read {path}: {err}") from None
    rows = [row for row in rows if row]
    if len(rows) < 2:
        raise DomainError(f"{path}: need a header row and at least one data row")
    header = [name.strip() for name in rows[0]]
    width = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DomainError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(field) for field in row])
        except ValueError:
            raise DomainError(f"{path}:{lineno}: non-numeric field") from None
    return np.asarray(data, dtype=float), header
