import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def table1_model():
    from factor_residuals import build_population_model

    return build_population_model(3, 0.4, 5)


def random_zero_diagonal(p: int, seed: int = 0, scale: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((p, p)) * scale
    omega = 0.5 * (raw + raw.T)
    np.fill_diagonal(omega, 0.0)
    return omega
