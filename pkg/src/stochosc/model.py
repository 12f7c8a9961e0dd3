"""Oscillator systems in phase space.

The dynamics are

    dx = v dt
    M dv = (-B v - grad V(x) + u) dt + Sigma dW

with state xi = (x, v) in R^{2n}.  For a quadratic potential
V(x) = x'Kx / 2 this is the linear system d xi = A xi dt + Bn dW with

    A  = [[0, I], [-M^{-1} K, -M^{-1} B]]
    Bn = [[0], [M^{-1} Sigma]]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidModelError, RingTooSmallError, UnsupportedPotentialError

_SYM_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_square(name: str, a: np.ndarray, n: int | None = None) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidModelError(f"{name} must be a square matrix, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise InvalidModelError(f"{name} must be {n}x{n}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidModelError(f"{name} has non-finite entries")


def _check_spd(name: str, a: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > _SYM_TOL * scale:
        raise InvalidModelError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(0.5 * (a + a.T)).min() <= 0:
        raise InvalidModelError(f"{name} must be positive definite")


@dataclass(frozen=True)
class QuadraticPotential:
    """V(x) = x'Kx / 2 with K symmetric positive definite."""

    K: np.ndarray

    def __post_init__(self):
        K = _frozen(self.K)
        _check_square("K", K)
        _check_spd("K", K)
        object.__setattr__(self, "K", K)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.K, x)

    def gradient(self, x):
        return np.asarray(x, dtype=float) @ self.K


@dataclass(frozen=True)
class CustomPotential:
    """User-supplied potential given by value and gradient evaluators.

    Both evaluators must accept arrays of shape ``(..., n)``; ``value``
    returns shape ``(...)`` and ``gradient`` returns ``(..., n)``.  No
    coercivity check is made on the supplied functions.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


@dataclass(frozen=True)
class PolynomialPotential:
    """Separable on-site polynomial V(x) = sum_i sum_d coeffs[d] x_i^d.

    ``coeffs`` lists coefficients by ascending degree.  This is the
    ``"polynomial"`` potential of model files.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs)
        if not c or not all(np.isfinite(c)):
            raise InvalidModelError("polynomial coeffs must be a non-empty list of finite numbers")
        object.__setattr__(self, "coeffs", c)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, self.coeffs).sum(axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(x, d)


PotentialSpec = Union[QuadraticPotential, CustomPotential, PolynomialPotential]


@dataclass(frozen=True)
class OscillatorModel:
    """Coupled stochastic oscillators in contact with a bath at temperature T.

    Parameters
    ----------
    M : (n, n) array
        Mass matrix, symmetric positive definite.
    B : (n, n) array
        Friction matrix with ``B + B'`` positive semidefinite.
    Sigma : (n, n) array
        Nonsingular noise intensity.
    potential : PotentialSpec
    T : float
        Bath temperature.
    k : float, optional
        Boltzmann constant (default 1, i.e. natural units).
    """

    M: np.ndarray
    B: np.ndarray
    Sigma: np.ndarray
    potential: PotentialSpec
    T: float
    k: float = 1.0
    _Minv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M, B, S = _frozen(self.M), _frozen(self.B), _frozen(self.Sigma)
        _check_square("M", M)
        n = M.shape[0]
        _check_square("B", B, n)
        _check_square("Sigma", S, n)
        _check_spd("M", M)
        sym = 0.5 * (B + B.T)
        if np.linalg.eigvalsh(sym).min() < -1e-12 * max(1.0, float(np.abs(B).max())):
            raise InvalidModelError("B + B' must be positive semidefinite")
        sv = np.linalg.svd(S, compute_uv=False)
        if sv.min() <= 1e-12 * sv.max():
            raise InvalidModelError("Sigma must be nonsingular")
        if isinstance(self.potential, QuadraticPotential) and self.potential.K.shape != (n, n):
            raise InvalidModelError(f"K must be {n}x{n}, got {self.potential.K.shape}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidModelError("T must be a positive real")
        if not (np.isfinite(self.k) and self.k > 0):
            raise InvalidModelError("k must be a positive real")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "_Minv", _frozen(np.linalg.inv(M)))

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def Minv(self) -> np.ndarray:
        return self._Minv

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.potential, QuadraticPotential)

    @property
    def K(self) -> np.ndarray:
        if not self.is_quadratic:
            raise UnsupportedPotentialError("K is only defined for quadratic potentials")
        return self.potential.K

    @property
    def noise_cov(self) -> np.ndarray:
        """Sigma Sigma'."""
        return self.Sigma @ self.Sigma.T

    def replace(self, **changes) -> "OscillatorModel":
        fields = dict(M=self.M, B=self.B, Sigma=self.Sigma, potential=self.potential, T=self.T, k=self.k)
        fields.update(changes)
        return OscillatorModel(**fields)


@dataclass(frozen=True)
class PhaseSpaceMatrices:
    """Linear phase-space representation.

    ``uses_gradient`` is set for non-quadratic potentials: the K-block of
    ``A`` is then zero and the drift must add ``-M^{-1} grad V(x)``.
    """

    A: np.ndarray
    Bn: np.ndarray
    D: np.ndarray
    uses_gradient: bool = False


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise InvalidModelError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        cov = _frozen(0.5 * (cov + cov.T))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def centered(cls, cov) -> "GaussianState":
        cov = np.asarray(cov, dtype=float)
        return cls(np.zeros(cov.shape[0]), cov)


@dataclass(frozen=True)
class FDCheck:
    holds: bool
    residual: np.ndarray


def build_phase_space(model: OscillatorModel) -> PhaseSpaceMatrices:
    n = model.n
    Z, I = np.zeros((n, n)), np.eye(n)
    stiff = model.Minv @ model.K if model.is_quadratic else Z
    A = np.block([[Z, I], [-stiff, -model.Minv @ model.B]])
    Bn = np.vstack([Z, model.Minv @ model.Sigma])
    D = np.vstack([Z, I])
    return PhaseSpaceMatrices(_frozen(A), _frozen(Bn), _frozen(D), uses_gradient=not model.is_quadratic)


def build_ring(
    N: int,
    masses: Sequence[float],
    beta: float,
    gamma: float,
    stiffness: PotentialSpec,
    rows,
    T: float = 1.0,
    k: float = 1.0,
) -> OscillatorModel:
    """Ring of N oscillators with nearest-neighbour velocity coupling.

    ``rows`` stacks the per-oscillator noise rows into Sigma.
    """
    if N < 3:
        raise RingTooSmallError(f"a ring needs at least 3 oscillators, got {N}")
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (N,) or np.any(masses <= 0):
        raise InvalidModelError("masses must be N positive numbers")
    B = beta * np.eye(N)
    for i in range(N):
        B[i, (i + 1) % N] = gamma
        B[i, (i - 1) % N] = gamma
    Sigma = np.asarray(rows, dtype=float).reshape(N, N)
    return OscillatorModel(np.diag(masses), B, Sigma, stiffness, T=T, k=k)


def boltzmann_state(model: OscillatorModel, temp: float) -> GaussianState:
    """Gaussian Boltzmann state N(0, k temp diag(K, M)^{-1})."""
    if not model.is_quadratic:
        raise UnsupportedPotentialError("Boltzmann state is Gaussian only for quadratic potentials")
    if not temp > 0:
        raise InvalidModelError("temperature must be positive")
    n = model.n
    cov = np.zeros((2 * n, 2 * n))
    cov[:n, :n] = np.linalg.inv(model.K)
    cov[n:, n:] = model.Minv
    return GaussianState(np.zeros(2 * n), model.k * temp * cov)


def boltzmann_precision(model: OscillatorModel, temp: float) -> np.ndarray:
    """Inverse covariance diag(K, M) / (k temp) of the Boltzmann state."""
    n = model.n
    S = np.zeros((2 * n, 2 * n))
    S[:n, :n] = model.K
    S[n:, n:] = model.M
    return S / (model.k * temp)


def _rel_check(residual: np.ndarray, scale: float, tol: float) -> bool:
    return bool(np.abs(residual).max() <= tol * max(scale, np.finfo(float).tiny))


def check_fd(model: OscillatorModel, tol: float = 1e-10) -> FDCheck:
    """Fluctuation-dissipation relation Sigma Sigma' = kT (B + B')."""
    SS = model.noise_cov
    residual = SS - model.k * model.T * (model.B + model.B.T)
    return FDCheck(_rel_check(residual, float(np.abs(SS).max()), tol), residual)


def hamiltonian(model: OscillatorModel, x, v):
    """H(x, v) = v'Mv / 2 + V(x); broadcasts over leading axes."""
    v = np.asarray(v, dtype=float)
    kinetic = 0.5 * np.einsum("...i,ij,...j->...", v, model.M, v)
    return kinetic + model.potential.value(x)
