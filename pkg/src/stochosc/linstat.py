"""Linear and stationary analysis of quadratic oscillator models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    DivergenceInfiniteError,
    HeatingNotCoolingError,
    IntegrationDivergedError,
    InvalidModelError,
    NoUniqueSolutionError,
    UnsupportedPotentialError,
)
from .model import (
    FDCheck,
    GaussianState,
    OscillatorModel,
    _rel_check,
    build_phase_space,
    check_fd,
)

RANK_RTOL = 1e-9
LYAP_RTOL = 1e-10

MatrixOrSchedule = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class Controllability:
    controllable: bool
    rank: int


@dataclass(frozen=True)
class SteadyFeedback:
    """Constant velocity feedback, applied as the force ``-U v``.

    ``optimal`` is True only when minimum input power is certified
    (scalar mass matrix); otherwise U is the symmetric feasible gain.
    """

    U: np.ndarray
    power: float
    T_eff: float
    optimal: bool = True


@dataclass(frozen=True)
class StationaryReport:
    stable: bool
    controllable: bool
    pervasive_damping: bool
    invariant: Optional[GaussianState]
    fd_holds: bool
    reversible: bool
    spectral_abscissa: float

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "controllable": self.controllable,
            "pervasive_damping": self.pervasive_damping,
            "invariant": None
            if self.invariant is None
            else {"mean": self.invariant.mean.tolist(), "cov": self.invariant.cov.tolist()},
            "fd_holds": self.fd_holds,
            "reversible": self.reversible,
            "spectral_abscissa": self.spectral_abscissa,
        }


@dataclass(frozen=True)
class CovariancePath:
    times: np.ndarray
    covs: np.ndarray  # (steps + 1, m, m)

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[i], t, rtol=0, atol=1e-9 * max(1.0, abs(t))):
            raise ValueError(f"t={t} is not a grid node")
        return self.covs[i]


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve A P + P A' + Q = 0 through its Kronecker form.

    Intended for the desk-scale sizes used here (dimension up to ~40).
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    m = A.shape[0]
    eye = np.eye(m)
    # row-major vec: vec(A P) = (A kron I) p, vec(P A') = (I kron A) p
    L = np.kron(A, eye) + np.kron(eye, A)
    try:
        p = np.linalg.solve(L, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NoUniqueSolutionError("Lyapunov operator is singular (A and -A share an eigenvalue)") from exc
    P = _sym(p.reshape(m, m))
    res = A @ P + P @ A.T + Q
    if not np.all(np.isfinite(P)) or np.abs(res).max() > LYAP_RTOL * (1 + np.abs(Q).max()):
        raise NoUniqueSolutionError(
            f"Lyapunov solve inaccurate (residual {np.abs(res).max():.3e}); operator near-singular"
        )
    return P


def is_controllable(A, Bn) -> Controllability:
    """Kalman rank test on [Bn, A Bn, ..., A^{m-1} Bn]."""
    A = np.asarray(A, dtype=float)
    Bn = np.asarray(Bn, dtype=float)
    if Bn.ndim == 1:
        Bn = Bn[:, None]
    m = A.shape[0]
    blocks = [Bn]
    for _ in range(m - 1):
        blocks.append(A @ blocks[-1])
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    return Controllability(rank == m, rank)


def spectral_abscissa(A) -> float:
    try:
        ev = np.linalg.eigvals(np.asarray(A, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise IntegrationDivergedError("eigenvalue iteration did not converge") from exc
    return float(ev.real.max())


def damping_pair(model: OscillatorModel) -> tuple[np.ndarray, np.ndarray]:
    """Matrix pair whose controllability encodes pervasive damping."""
    n = model.n
    Z, I = np.zeros((n, n)), np.eye(n)
    F = np.block([[Z, I], [-model.Minv @ model.K, Z]])
    G = np.block([[Z, Z], [Z, -model.Minv @ (0.5 * (model.B + model.B.T))]])
    return F, G


def is_reversible(model: OscillatorModel, tol: float = 1e-10) -> bool:
    """B symmetric positive definite with Sigma Sigma' = 2kT B."""
    B = model.B
    scale = max(1.0, float(np.abs(B).max()))
    if np.abs(B - B.T).max() > 1e-12 * scale:
        return False
    if np.linalg.eigvalsh(_sym(B)).min() <= 0:
        return False
    SS = model.noise_cov
    return _rel_check(SS - 2 * model.k * model.T * B, float(np.abs(SS).max()), tol)


def invariant_gaussian(model: OscillatorModel) -> StationaryReport:
    if not model.is_quadratic:
        raise UnsupportedPotentialError("invariant Gaussian analysis needs a quadratic potential")
    ps = build_phase_space(model)
    alpha = spectral_abscissa(ps.A)
    stable = alpha < 0
    ctrl = is_controllable(ps.A, ps.Bn).controllable
    pervasive = is_controllable(*damping_pair(model)).controllable
    invariant = None
    if stable and ctrl:
        invariant = GaussianState.centered(solve_lyapunov(ps.A, ps.Bn @ ps.Bn.T))
    return StationaryReport(
        stable=stable,
        controllable=ctrl,
        pervasive_damping=pervasive,
        invariant=invariant,
        fd_holds=check_fd(model).holds,
        reversible=is_reversible(model),
        spectral_abscissa=alpha,
    )


def steady_power(model: OscillatorModel, U, T_eff: float) -> float:
    """Expected input power k T_eff tr(M^{-1} U' M^{-2} U) at the target state."""
    U = np.asarray(U, dtype=float)
    Mi = model.Minv
    return float(model.k * T_eff * np.trace(Mi @ U.T @ Mi @ Mi @ U))


def design_steady_feedback(model: OscillatorModel, T_eff: float) -> SteadyFeedback:
    """Symmetric gain holding the Boltzmann state at T_eff < T.

    U_sym = (T - T_eff) / (2 k T T_eff) Sigma Sigma'.  It minimises input
    power when M is a scalar matrix; otherwise ``optimal`` is False.
    """
    T = model.T
    if not (np.isfinite(T_eff) and T_eff > 0):
        raise InvalidModelError("T_eff must be positive")
    if T_eff > T:
        raise HeatingNotCoolingError(f"T_eff={T_eff} exceeds bath temperature T={T}")
    if not check_fd(model).holds:
        warnings.warn("fluctuation-dissipation relation fails for this model; target state not Boltzmann",
                      RuntimeWarning, stacklevel=2)
    U = 0.5 * (T - T_eff) / (model.k * T * T_eff) * model.noise_cov
    U = _sym(U)
    M = model.M
    scalar_mass = bool(np.allclose(M, M[0, 0] * np.eye(model.n), rtol=1e-12, atol=0))
    return SteadyFeedback(U=U, power=steady_power(model, U, T_eff), T_eff=float(T_eff), optimal=scalar_mass)


def verify_fd2(model: OscillatorModel, U, T_eff: float, tol: float = 1e-10) -> FDCheck:
    """Residual of (T - T_eff)/T Sigma Sigma' = k T_eff (U + U')."""
    U = np.asarray(U, dtype=float)
    lhs = (model.T - T_eff) / model.T * model.noise_cov
    residual = lhs - model.k * T_eff * (U + U.T)
    return FDCheck(_rel_check(residual, max(float(np.abs(model.noise_cov).max()), 1.0), tol), residual)


def gaussian_kl(p: GaussianState, q: GaussianState) -> float:
    """Relative entropy D(p || q) between two Gaussians."""
    P, Q = p.cov, q.cov
    m = p.dim
    sign_q, logdet_q = np.linalg.slogdet(Q)
    if sign_q <= 0 or not np.isfinite(logdet_q):
        raise DivergenceInfiniteError("reference covariance is singular")
    sign_p, logdet_p = np.linalg.slogdet(P)
    if sign_p <= 0:
        return float("inf")
    d = q.mean - p.mean
    Qinv_P = np.linalg.solve(Q, P)
    kl = 0.5 * (np.trace(Qinv_P) - m + d @ np.linalg.solve(Q, d) + logdet_q - logdet_p)
    return float(max(kl, 0.0))


def free_energy(p: GaussianState, rho_b: GaussianState, kT: float) -> float:
    """Free energy excess kT D(p || rho_B)."""
    return kT * gaussian_kl(p, rho_b)


def _as_schedule(A_cl: MatrixOrSchedule) -> Callable[[float], np.ndarray]:
    if callable(A_cl):
        return A_cl
    A_const = np.asarray(A_cl, dtype=float)
    return lambda t: A_const


def propagate_covariance(A_cl: MatrixOrSchedule, Q, P0, t0: float, t1: float, steps: int) -> CovariancePath:
    """RK4 integration of dP/dt = A_cl P + P A_cl' + Q.

    ``A_cl`` is a constant matrix or a callable ``t -> A_cl(t)``.
    """
    if steps < 1:
        raise InvalidModelError("steps must be >= 1")
    Afun = _as_schedule(A_cl)
    Q = np.asarray(Q, dtype=float)
    P = _sym(np.asarray(P0, dtype=float))
    h = (t1 - t0) / steps
    times = t0 + h * np.arange(steps + 1)
    times[-1] = t1
    out = np.empty((steps + 1,) + P.shape)
    out[0] = P

    def f(t, X):
        A = Afun(t)
        AX = A @ X
        return AX + AX.T + Q

    for i in range(steps):
        t = times[i]
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = f(t, P)
            k2 = f(t + h / 2, P + h / 2 * k1)
            k3 = f(t + h / 2, P + h / 2 * k2)
            k4 = f(t + h, P + h * k3)
            P = _sym(P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        if not np.all(np.isfinite(P)):
            raise IntegrationDivergedError(f"covariance integration diverged at t={times[i + 1]:.6g}")
        out[i + 1] = P
    return CovariancePath(times, out)
