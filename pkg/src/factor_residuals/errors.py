"""Shared exception types."""


class DomainError(ValueError):
    """An argument lies outside the documented domain of an operation."""


class DegenerateDataError(ValueError):
    """Data cannot support the computation (zero variance, singular matrix)."""


class NoComponentsError(ValueError):
    """The residual matrix has no positive eigenvalues to build components from."""


class FeasibilityError(ValueError):
    """A requested joint covariance is not positive semidefinite."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (minimum eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue
