"""Finite-horizon cooling by a Gaussian Schrodinger bridge.

For a quadratic potential the optimal steering between Boltzmann states
reduces to the Riccati pair

    dPi/dt = -A'Pi - Pi A + Pi BB' Pi
    dH/dt  = -A'H  - H A  - H BB' H

with Pi(t0) + H(t0) = S0 and Pi(t1) + H(t1) = S1, where S0 and S1 are the
inverse covariances of the initial and target states.  The second boundary
condition is met by Newton shooting on Pi(t0).  The optimal force is
u = -G(t) xi with G = Sigma Bn' Pi(t).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidModelError, RiccatiBlowUpError, SolverFailedError, UnsupportedPotentialError
from .linstat import CovariancePath, propagate_covariance
from .model import OscillatorModel, boltzmann_precision, boltzmann_state, build_phase_space

log = logging.getLogger(__name__)

BLOWUP = 1e12


@dataclass(frozen=True)
class BoundaryData:
    S0: np.ndarray
    S1: np.ndarray
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise InvalidModelError("t1 must exceed t0")
        for name in ("S0", "S1"):
            S = np.asarray(getattr(self, name), dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or np.abs(S - S.T).max() > 1e-12 * max(1, np.abs(S).max()):
                raise InvalidModelError(f"{name} must be a symmetric square matrix")
            if np.linalg.eigvalsh(S).min() <= 0:
                raise InvalidModelError(f"{name} must be positive definite")
            object.__setattr__(self, name, S)


@dataclass(frozen=True)
class RiccatiPath:
    times: np.ndarray
    Pi: np.ndarray  # (steps + 1, m, m)
    Hh: np.ndarray


@dataclass(frozen=True)
class BridgeSolution:
    """Converged bridge: Riccati path, gain schedule and costs.

    ``gains[i]`` is the n x 2n matrix G(times[i]); the optimal force is
    ``-gains[i] @ xi``.  ``cov`` is the closed-loop covariance path.
    """

    path: RiccatiPath
    gains: np.ndarray
    expected_cost: float
    terminal_cov_residual: float
    shooting_residual: float
    iterations: int
    cov: CovariancePath
    A: np.ndarray
    Bn: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def t0(self) -> float:
        return float(self.path.times[0])

    @property
    def t1(self) -> float:
        return float(self.path.times[-1])

    def summary(self) -> dict:
        return {
            "t0": self.t0,
            "t1": self.t1,
            "steps": len(self.times) - 1,
            "expected_cost": self.expected_cost,
            "terminal_cov_residual": self.terminal_cov_residual,
            "shooting_residual": self.shooting_residual,
            "iterations": self.iterations,
            "Pi_t0": self.path.Pi[0].tolist(),
            "Pi_t1": self.path.Pi[-1].tolist(),
            "terminal_cov": self.cov.covs[-1].tolist(),
        }


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def riccati_rhs(Pi, Hh, A, BBt):
    """Right-hand sides of the Riccati pair; broadcasts over leading axes."""
    At = A.T
    dPi = -At @ Pi - Pi @ A + Pi @ BBt @ Pi
    dHh = -At @ Hh - Hh @ A - Hh @ BBt @ Hh
    return _sym(dPi), _sym(dHh)


def _rk4_pair(Pi0, Hh0, A, BBt, t0, t1, steps, keep_path):
    """Batched RK4 over stacks of matrices.

    Returns (Pi_path, Hh_path, blown) where paths are (steps+1, batch, m, m)
    if ``keep_path`` else final values (batch, m, m); ``blown`` flags batch
    members that exceeded the guard or went non-finite.
    """
    Pi, Hh = _sym(Pi0), _sym(Hh0)
    h = (t1 - t0) / steps
    blown = np.zeros(Pi.shape[0], dtype=bool)
    if keep_path:
        Ps = np.empty((steps + 1,) + Pi.shape)
        Hs = np.empty_like(Ps)
        Ps[0], Hs[0] = Pi, Hh
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            a1, b1 = riccati_rhs(Pi, Hh, A, BBt)
            a2, b2 = riccati_rhs(Pi + h / 2 * a1, Hh + h / 2 * b1, A, BBt)
            a3, b3 = riccati_rhs(Pi + h / 2 * a2, Hh + h / 2 * b2, A, BBt)
            a4, b4 = riccati_rhs(Pi + h * a3, Hh + h * b3, A, BBt)
            Pi = _sym(Pi + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4))
            Hh = _sym(Hh + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4))
            size = np.maximum(np.abs(Pi).max(axis=(1, 2)), np.abs(Hh).max(axis=(1, 2)))
            bad = ~(size <= BLOWUP)
            if bad.any():
                blown |= bad
                Pi[bad] = 0.0
                Hh[bad] = 0.0
            if keep_path:
                Ps[i + 1], Hs[i + 1] = Pi, Hh
    if keep_path:
        return Ps, Hs, blown
    return Pi, Hh, blown


def integrate_pair(Pi0, Hh0, A, BBt, t0: float, t1: float, steps: int = 1000) -> RiccatiPath:
    """Fixed-step RK4 integration of the Riccati pair from t0 to t1.

    Raises RiccatiBlowUpError when any entry exceeds 1e12 in magnitude.
    """
    if steps < 1:
        raise InvalidModelError("steps must be >= 1")
    Pi0 = np.asarray(Pi0, dtype=float)
    Hh0 = np.asarray(Hh0, dtype=float)
    if max(np.abs(Pi0).max(), np.abs(Hh0).max()) > BLOWUP:
        raise RiccatiBlowUpError("initial Riccati data exceeds the blow-up guard")
    Ps, Hs, blown = _rk4_pair(Pi0[None], Hh0[None], np.asarray(A, float), np.asarray(BBt, float),
                              t0, t1, steps, keep_path=True)
    if blown[0]:
        raise RiccatiBlowUpError("Riccati solution escaped in finite time")
    times = t0 + (t1 - t0) / steps * np.arange(steps + 1)
    times[-1] = t1
    return RiccatiPath(times, Ps[:, 0], Hs[:, 0])


def _sym_index(m):
    return np.triu_indices(m)


def _unpack(p, m):
    """Stack of parameter vectors (..., m(m+1)/2) -> symmetric matrices."""
    iu = _sym_index(m)
    S = np.zeros(p.shape[:-1] + (m, m))
    S[..., iu[0], iu[1]] = p
    S[..., iu[1], iu[0]] = p
    return S


def _pack(S):
    iu = _sym_index(S.shape[-1])
    return S[..., iu[0], iu[1]]


def _residuals(Pi0_batch, bd: BoundaryData, A, BBt, steps):
    Pf, Hf, blown = _rk4_pair(Pi0_batch, bd.S0 - Pi0_batch, A, BBt, bd.t0, bd.t1, steps, keep_path=False)
    return _sym(Pf + Hf - bd.S1), blown


def shooting_residual(Pi0, bd: BoundaryData, A, BBt, steps: int = 1000) -> np.ndarray:
    """Terminal mismatch Pi(t1) + H(t1) - S1 with H(t0) = S0 - Pi0."""
    Pi0 = _sym(np.asarray(Pi0, dtype=float))
    R, blown = _residuals(Pi0[None], bd, np.asarray(A, float), np.asarray(BBt, float), steps)
    if blown[0]:
        raise RiccatiBlowUpError("Riccati solution escaped in finite time")
    return R[0]


def solve_boundary(
    bd: BoundaryData,
    A,
    BBt,
    steps: int = 1000,
    tol: float = 1e-9,
    max_iter: int = 50,
    fd_step: float = 1e-6,
) -> tuple[np.ndarray, float, int]:
    """Newton shooting for Pi(t0).  Returns (Pi0, residual max-norm, iterations).

    The Jacobian is formed by central differences over the upper-triangular
    parameterisation; all perturbed integrations run as one batch.
    """
    A = np.asarray(A, dtype=float)
    BBt = np.asarray(BBt, dtype=float)
    m = A.shape[0]
    dim = m * (m + 1) // 2
    p = np.zeros(dim)
    R, blown = _residuals(_unpack(p[None], m), bd, A, BBt, steps)
    if blown[0]:
        raise SolverFailedError("Riccati blow-up at the initial guess Pi(t0)=0")
    r = _pack(R[0])
    for it in range(max_iter + 1):
        res = float(np.abs(r).max())
        log.debug("shooting iteration %d: |R|_max = %.3e", it, res)
        if res <= tol:
            return _unpack(p, m), res, it
        if it == max_iter:
            break
        h = fd_step * max(1.0, float(np.abs(p).max()))
        probes = np.concatenate([p + h * np.eye(dim), p - h * np.eye(dim)])
        Rp, blown = _residuals(_unpack(probes, m), bd, A, BBt, steps)
        if blown.any():
            raise SolverFailedError("Riccati blow-up while forming the Jacobian", res)
        Rp = _pack(Rp)
        J = (Rp[:dim] - Rp[dim:]).T / (2 * h)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        norm_r = np.linalg.norm(r)
        lam = 1.0
        for _ in range(40):
            Rn, blown = _residuals(_unpack((p + lam * step)[None], m), bd, A, BBt, steps)
            rn = _pack(Rn[0])
            if not blown[0] and np.all(np.isfinite(rn)) and np.linalg.norm(rn) < (1 - 1e-4 * lam) * norm_r:
                break
            lam *= 0.5
        else:
            raise SolverFailedError("line search failed to reduce the shooting residual", res)
        p, r = p + lam * step, rn
    raise SolverFailedError(f"shooting did not converge in {max_iter} iterations", float(np.abs(r).max()))


def _hermite_schedule(times, values, slopes):
    """Cubic Hermite interpolant through (times, values, slopes)."""
    t0, h = times[0], times[1] - times[0]
    last = len(times) - 2

    def at(t):
        i = min(max(int((t - t0) // h), 0), last)
        s = (t - times[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * values[i] + h10 * h * slopes[i] + h01 * values[i + 1] + h11 * h * slopes[i + 1]

    return at


def _simpson(y, h):
    """Composite Simpson on a uniform grid; a 3/8 panel closes odd counts."""
    n = len(y) - 1
    if n == 1:
        return 0.5 * h * (y[0] + y[1])
    total = 0.0
    if n % 2:
        total += 3 * h / 8 * (y[-4] + 3 * y[-3] + 3 * y[-2] + y[-1])
        y = y[:-3]
        n -= 3
    if n:
        total += h / 3 * (y[0] + 4 * y[1:n:2].sum() + 2 * y[2:n - 1:2].sum() + y[n])
    return float(total)


def solve_bridge(
    model: OscillatorModel,
    T: float,
    T_eff: float,
    t0: float = 0.0,
    t1: float = 1.0,
    steps: int = 1000,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> BridgeSolution:
    """Minimum-effort steering from the Boltzmann state at T to the one at T_eff."""
    if not model.is_quadratic:
        raise UnsupportedPotentialError("bridge synthesis needs a quadratic potential")
    if not (T > 0 and T_eff > 0):
        raise InvalidModelError("temperatures must be positive")
    if steps < 1:
        raise InvalidModelError("steps must be >= 1")
    ps = build_phase_space(model)
    A, Bn = np.asarray(ps.A), np.asarray(ps.Bn)
    BBt = Bn @ Bn.T
    bd = BoundaryData(boltzmann_precision(model, T), boltzmann_precision(model, T_eff), t0, t1)

    Pi0, res, iters = solve_boundary(bd, A, BBt, steps=steps, tol=tol, max_iter=max_iter)
    path = integrate_pair(Pi0, bd.S0 - Pi0, A, BBt, t0, t1, steps)

    gains = model.Sigma @ Bn.T @ path.Pi  # (steps+1, n, 2n)
    dPi, _ = riccati_rhs(path.Pi, path.Hh, A, BBt)
    Pi_at = _hermite_schedule(path.times, path.Pi, dPi)
    P0 = boltzmann_state(model, T).cov
    cov = propagate_covariance(lambda t: A - BBt @ Pi_at(t), BBt, P0, t0, t1, steps)

    # cost rate E[|Bn' Pi xi|^2] / 2
    W = Bn.T @ path.Pi
    rate = 0.5 * np.einsum("kij,kjl,kil->k", W, cov.covs, W)
    target = boltzmann_state(model, T_eff).cov
    return BridgeSolution(
        path=path,
        gains=gains,
        expected_cost=max(_simpson(rate, (t1 - t0) / steps), 0.0),
        terminal_cov_residual=float(np.abs(cov.covs[-1] - target).max()),
        shooting_residual=res,
        iterations=iters,
        cov=cov,
        A=A,
        Bn=Bn,
    )


def gain_at(solution: BridgeSolution, t: float) -> np.ndarray:
    """Linear interpolation of the gain schedule; exact at grid nodes."""
    times = solution.times
    if not (times[0] <= t <= times[-1]):
        raise ValueError(f"t={t} outside [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, t, side="right")) - 1
    i = min(i, len(times) - 2)
    if t == times[i]:
        return solution.gains[i].copy()
    if t == times[i + 1]:
        return solution.gains[i + 1].copy()
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1 - w) * solution.gains[i] + w * solution.gains[i + 1]


def gains_at(solution: BridgeSolution, ts) -> np.ndarray:
    """Vectorised ``gain_at`` over an array of times."""
    ts = np.asarray(ts, dtype=float)
    flat = solution.gains.reshape(len(solution.times), -1)
    out = np.stack([np.interp(ts, solution.times, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
    return out.reshape(ts.shape + solution.gains.shape[1:])


def write_gains_csv(solution: BridgeSolution, path) -> None:
    n, m = solution.gains.shape[1:]
    header = ["t"] + [f"G_{i + 1}_{j + 1}" for i in range(n) for j in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, G in zip(solution.times, solution.gains):
            w.writerow([format(t, ".17g")] + [format(g, ".17g") for g in G.reshape(-1)])


def read_gains_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (times, gains[k, i, j])."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = max(int(h.split("_")[1]) for h in header[1:])
    m = max(int(h.split("_")[2]) for h in header[1:])
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return data[:, 0], data[:, 1:].reshape(-1, n, m)
