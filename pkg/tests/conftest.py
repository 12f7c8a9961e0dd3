import numpy as np
import pytest
from hypothesis import settings

from stochosc.bridge import solve_bridge
from stochosc.files import inertial_model

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def inertial():
    """m = beta = sigma = K = 1 at T = 1/2 (fluctuation-dissipation holds)."""
    return inertial_model()


@pytest.fixture(scope="session")
def cooling_bridge(inertial):
    """Optimal steering from T = 1/2 to T_eff = 1/16 on [0, 1]."""
    return solve_bridge(inertial, 0.5, 1 / 16, 0.0, 1.0, 1000)


def random_spd(rng, n, scale=1.0, floor=0.2):
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return scale * Q @ np.diag(rng.uniform(floor, 2.0, n)) @ Q.T


def random_quadratic_model(rng, n=None):
    from stochosc.model import OscillatorModel, QuadraticPotential

    n = n or int(rng.integers(1, 5))
    M = random_spd(rng, n)
    K = random_spd(rng, n)
    S = rng.standard_normal((n, n)) * 0.3
    B = random_spd(rng, n) + (S - S.T)
    Sigma = random_spd(rng, n) + 0.3 * rng.standard_normal((n, n))
    while abs(np.linalg.det(Sigma)) < 1e-3:
        Sigma = Sigma + 0.5 * np.eye(n)
    return OscillatorModel(M, B, Sigma, QuadraticPotential(K), T=float(rng.uniform(0.2, 2.0)))
