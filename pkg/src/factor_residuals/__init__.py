"""Factor analysis residual components.

Common factor model populations, maximum-likelihood exploratory factor
analysis with Varimax rotation, principal components of residual
correlations, score-level identity verification on exactly constructed
populations, and the Monte Carlo study grid around them.
"""

from .datagen import (
    Sample,
    generate_fixed_population,
    generate_sample,
    sample_correlation,
    subsample,
)
from .efa import (
    EfaSolution,
    FactorMatching,
    FitOptions,
    fit_ml,
    match_factors,
    ml_discrepancy,
    tucker_congruence,
    varimax,
    varimax_criterion,
)
from .errors import (
    DegenerateDataError,
    DomainError,
    FeasibilityError,
    NoComponentsError,
)
from .model import (
    CovarianceMatrix,
    PopulationModel,
    build_population_model,
    implied_covariance,
    random_population_model,
    residual_covariance,
    residual_matrix,
)
from .residuals import (
    DIRECT_PROJECTION,
    TRUE_SCORES,
    ComponentScores,
    ResidualDecomposition,
    component_factor_correlations,
    component_scores,
    decompose_residuals,
)
from .sim import (
    SimulationConfig,
    SimulationRecord,
    SimulationResults,
    aggregate_eigenvalue_stats,
    aggregate_rmsc,
    correlation_histogram,
    run_grid,
    run_replication,
    tail_fraction,
)
from .theorems import (
    ExactPopulation,
    IdentityReport,
    check_residual_identity,
    construct_exact_population,
    run_verification,
    verify_error_cross_covariance,
    verify_explained_cross_covariance,
    verify_factor_cross_covariance,
)

__version__ = "0.1.0"
