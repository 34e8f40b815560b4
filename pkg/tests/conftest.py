import numpy as np
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def rand_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random well-conditioned SPD matrix."""
    M = rng.standard_normal((n, n))
    return M @ M.T + n * np.eye(n)


def rand_sym(rng: np.random.Generator, n: int) -> np.ndarray:
    E = rng.standard_normal((n, n))
    return 0.5 * (E + E.T)
