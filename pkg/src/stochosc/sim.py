"""Monte Carlo simulation and estimators.

Euler-Maruyama on

    dx = v dt
    dv = M^{-1} (-B v - grad V(x) + u) dt + M^{-1} Sigma dW

with one independent noise stream per trajectory, derived from
(seed, trajectory index) so results do not depend on batching.  Path
integrals needed by the estimators (control cost, friction and control
work) are accumulated at every step; states and controls are kept on the
recording grid only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .bridge import BridgeSolution, gains_at
from .errors import DivergedStepError, InsufficientSamplesError, InvalidModelError
from .linstat import SteadyFeedback
from .model import GaussianState, OscillatorModel, hamiltonian


@dataclass(frozen=True)
class NoControl:
    def force(self, t, x, v):
        return np.zeros_like(v)


@dataclass(frozen=True)
class ConstantForce:
    u: np.ndarray

    def force(self, t, x, v):
        return np.broadcast_to(np.asarray(self.u, dtype=float), v.shape).copy()


@dataclass(frozen=True)
class SteadyControl:
    """Force -U v."""

    U: np.ndarray

    @classmethod
    def from_feedback(cls, fb: SteadyFeedback) -> "SteadyControl":
        return cls(np.asarray(fb.U))

    def force(self, t, x, v):
        return -v @ np.asarray(self.U, dtype=float).T


@dataclass(frozen=True)
class ScheduleControl:
    """Bridge feedback -G(t) xi on [t0, t1); zero afterwards."""

    solution: BridgeSolution

    def force(self, t, x, v):
        sol = self.solution
        if t >= sol.t1 or t < sol.t0:
            return np.zeros_like(v)
        G = gains_at(sol, t)
        return -np.concatenate([x, v], axis=-1) @ G.T


@dataclass(frozen=True)
class SwitchedControl:
    """Bridge schedule until t1, then the steady feedback -U v."""

    schedule: BridgeSolution
    then: SteadyFeedback

    def force(self, t, x, v):
        if t >= self.schedule.t1:
            return -v @ np.asarray(self.then.U, dtype=float).T
        return ScheduleControl(self.schedule).force(t, x, v)


ControlLaw = Union[NoControl, ConstantForce, SteadyControl, ScheduleControl, SwitchedControl]


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``record_every`` thins the stored grid; it must divide the step count.
    ``noiseless`` zeroes the noise (used to test deterministic bookkeeping).
    """

    dt: float = 1e-3
    t0: float = 0.0
    t_end: float = 1.0
    n_traj: int = 1000
    seed: int = 42
    record_every: int = 1
    chunk_size: int = 2000
    noiseless: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidModelError("dt must be positive")
        if not self.dt <= (self.t_end - self.t0) * (1 + 1e-12):
            raise InvalidModelError("dt must not exceed the horizon")
        if self.n_traj < 1:
            raise InvalidModelError("n_traj must be >= 1")
        if self.record_every < 1 or self.steps % self.record_every:
            raise InvalidModelError("record_every must divide the number of steps")
        if not 0 <= self.seed < 2**64:
            raise InvalidModelError("seed must be a 64-bit unsigned integer")

    @property
    def steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))


@dataclass
class TrajectoryEnsemble:
    """Sample paths on the recording grid plus per-trajectory path integrals.

    states: (n_traj, n_rec, 2n); controls: (n_traj, n_rec, n).  The
    accumulators ``cost``, ``friction_work``, ``control_work`` and
    ``martingale`` are left-point Riemann/Ito sums over every step.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    cost: np.ndarray
    friction_work: np.ndarray
    control_work: np.ndarray
    martingale: np.ndarray
    dt: float
    noiseless: bool = False
    controlled: bool = False

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.controls.shape[-1]

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a recorded grid node")
        return i


@dataclass(frozen=True)
class CostEstimate:
    estimate: float
    std_error: float


@dataclass(frozen=True)
class EnergyLedger:
    """Monte Carlo first-law bookkeeping dU = W + Q.

    ``W_fric`` is friction work, ``W_control`` the work done by the control
    force (zero for uncontrolled runs), ``residual = dU - W_fric - W_control
    - Q_heat``.  ``extended`` marks runs where the control term enters.
    """

    dU: float
    W_fric: float
    W_control: float
    Q_heat: float
    residual: float
    se_dU: float
    se_W_fric: float
    se_residual: float
    extended: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class LagTest:
    """Velocity-flip symmetry test C(tau) = R C(tau)' R.

    ``violation`` and ``std_error`` are 2n x 2n; ``max_violation`` is the
    largest absolute violation and ``max_z`` the largest violation in units
    of its standard error (components with zero spread are skipped).
    """

    violation: np.ndarray
    std_error: np.ndarray
    max_violation: float
    max_z: float

    def within(self, k: float) -> bool:
        mask = self.std_error > 0
        return bool(np.all(np.abs(self.violation[mask]) <= k * self.std_error[mask])
                    and np.all(self.violation[~mask] == 0))


def _em_update(x, v, model, u, dt, noise):
    with np.errstate(over="ignore", invalid="ignore"):
        force = -v @ model.B.T - model.potential.gradient(x) + u
        kick = noise @ model.Sigma.T * np.sqrt(dt)
        return x + v * dt, v + (force * dt + kick) @ model.Minv.T


def em_step(x, v, model: OscillatorModel, u, dt: float, noise):
    """One Euler-Maruyama step; operates on single states or (batch, n) stacks."""
    if not dt > 0:
        raise InvalidModelError("dt must be positive")
    as_f = lambda a: np.asarray(a, dtype=float)
    x_new, v_new = _em_update(as_f(x), as_f(v), model, as_f(u), dt, as_f(noise))
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
        raise DivergedStepError("Euler-Maruyama step produced non-finite state")
    return x_new, v_new


def _trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _cov_sqrt(cov):
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0, None))


def _draws(cfg: SimConfig, init: GaussianState, n: int, lo: int, hi: int):
    """Initial states and noise for trajectories lo..hi-1."""
    L = _cov_sqrt(init.cov)
    xi0 = np.empty((hi - lo, 2 * n))
    noise = np.empty((hi - lo, cfg.steps, n))
    for j, i in enumerate(range(lo, hi)):
        rng = _trajectory_rng(cfg.seed, i)
        xi0[j] = init.mean + L @ rng.standard_normal(2 * n)
        noise[j] = rng.standard_normal((cfg.steps, n))
    if cfg.noiseless:
        noise[:] = 0.0
    return xi0, noise


def _schedule_forces(law, times):
    """Precomputed gain stacks for bridge-driven laws (None if not applicable)."""
    if isinstance(law, ScheduleControl):
        sol, steady = law.solution, None
    elif isinstance(law, SwitchedControl):
        sol, steady = law.schedule, np.asarray(law.then.U, dtype=float)
    else:
        return None
    active = (times >= sol.t0) & (times < sol.t1)
    G = np.zeros((len(times),) + sol.gains.shape[1:])
    if active.any():
        G[active] = gains_at(sol, times[active])
    return G, active, steady


def simulate_ensemble(model: OscillatorModel, law: ControlLaw, init: GaussianState, cfg: SimConfig) -> TrajectoryEnsemble:
    n = model.n
    if init.dim != 2 * n:
        raise InvalidModelError(f"initial state must have dimension {2 * n}")
    steps, dt, rec = cfg.steps, cfg.dt, cfg.record_every
    step_times = cfg.t0 + dt * np.arange(steps + 1)
    n_rec = steps // rec + 1
    states = np.empty((cfg.n_traj, n_rec, 2 * n))
    controls = np.empty((cfg.n_traj, n_rec, n))
    acc = {k: np.zeros(cfg.n_traj) for k in ("cost", "friction_work", "control_work", "martingale")}
    SSinv = np.linalg.inv(model.noise_cov)
    Sinv = np.linalg.inv(model.Sigma)
    Bsym = 0.5 * (model.B + model.B.T)
    sched = _schedule_forces(law, step_times)

    def force(k, x, v):
        if sched is None:
            return law.force(step_times[k], x, v)
        G, active, steady = sched
        if active[k]:
            return -np.concatenate([x, v], axis=-1) @ G[k].T
        if steady is not None:
            return -v @ steady.T
        return np.zeros_like(v)

    for lo in range(0, cfg.n_traj, cfg.chunk_size):
        hi = min(lo + cfg.chunk_size, cfg.n_traj)
        xi0, noise = _draws(cfg, init, n, lo, hi)
        x, v = xi0[:, :n].copy(), xi0[:, n:].copy()
        cost = np.zeros(hi - lo)
        fric = np.zeros(hi - lo)
        cwork = np.zeros(hi - lo)
        mart = np.zeros(hi - lo)
        for k in range(steps + 1):
            u = force(k, x, v)
            if k % rec == 0:
                states[lo:hi, k // rec, :n] = x
                states[lo:hi, k // rec, n:] = v
                controls[lo:hi, k // rec] = u
            if k == steps:
                break
            cost += 0.5 * np.einsum("bi,ij,bj->b", u, SSinv, u)
            fric -= np.einsum("bi,ij,bj->b", v, Bsym, v)
            cwork += np.einsum("bi,bi->b", u, v)
            mart += np.einsum("bi,bi->b", u @ Sinv.T, noise[:, k]) * np.sqrt(dt)
            x, v = _em_update(x, v, model, u, dt, noise[:, k])
            bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(v).all(axis=1))
            if bad.any():
                idx = lo + int(np.argmax(bad))
                raise DivergedStepError(f"trajectory {idx} diverged at t={step_times[k + 1]:.6g}", idx)
        acc["cost"][lo:hi] = cost * dt
        acc["friction_work"][lo:hi] = fric * dt
        acc["control_work"][lo:hi] = cwork * dt
        acc["martingale"][lo:hi] = mart
    return TrajectoryEnsemble(
        times=step_times[::rec].copy(),
        states=states,
        controls=controls,
        dt=dt,
        noiseless=cfg.noiseless,
        controlled=not isinstance(law, NoControl),
        **acc,
    )


def empirical_covariance(ens: TrajectoryEnsemble, t: float) -> np.ndarray:
    """Unbiased sample covariance across trajectories at recorded time t."""
    if ens.n_traj < 2:
        raise InsufficientSamplesError("need at least two trajectories")
    return np.cov(ens.states[:, ens.index(t)], rowvar=False, ddof=1).reshape(2 * ens.n, 2 * ens.n)


def covariance_standard_error(ens: TrajectoryEnsemble, t: float) -> np.ndarray:
    """Componentwise standard error of the sample covariance at time t."""
    if ens.n_traj < 2:
        raise InsufficientSamplesError("need at least two trajectories")
    xi = ens.states[:, ens.index(t)]
    d = xi - xi.mean(axis=0)
    prod = d[:, :, None] * d[:, None, :]
    return prod.std(axis=0, ddof=1) / np.sqrt(ens.n_traj)


def _mean_se(samples) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return float(samples.mean()), float("nan")
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(samples.size))


def girsanov_cost(ens: TrajectoryEnsemble, model: OscillatorModel | None = None) -> CostEstimate:
    """Relative entropy of the controlled path law w.r.t. the uncontrolled one.

    Mean over trajectories of the Riemann sum of u'(Sigma Sigma')^{-1}u/2 dt.
    The cost accumulator already uses the model's noise, so ``model`` is
    accepted only for interface symmetry.
    """
    est, se = _mean_se(ens.cost)
    return CostEstimate(est, se)


def energy_ledger(ens: TrajectoryEnsemble, model: OscillatorModel) -> EnergyLedger:
    n = model.n
    horizon = float(ens.times[-1] - ens.times[0])
    first, last = ens.states[:, 0], ens.states[:, -1]
    dH = hamiltonian(model, last[:, :n], last[:, n:]) - hamiltonian(model, first[:, :n], first[:, n:])
    Q = 0.0 if ens.noiseless else 0.5 * horizon * float(np.trace(model.Minv @ model.noise_cov))
    dU, se_dU = _mean_se(dH)
    W_fric, se_W = _mean_se(ens.friction_work)
    W_ctrl, _ = _mean_se(ens.control_work)
    res, se_res = _mean_se(dH - ens.friction_work - ens.control_work - Q)
    return EnergyLedger(
        dU=dU, W_fric=W_fric, W_control=W_ctrl, Q_heat=Q, residual=res,
        se_dU=se_dU, se_W_fric=se_W, se_residual=se_res, extended=ens.controlled,
    )


def reversibility_lag_test(ens: TrajectoryEnsemble, lag: int) -> LagTest:
    """Lag covariance symmetry under velocity reversal.

    ``lag`` is an offset on the recording grid.  C(tau) is pooled over all
    start times in each trajectory; trajectories supply independent samples
    for the standard error.
    """
    n_rec = ens.states.shape[1]
    if not 0 <= lag < n_rec:
        raise ValueError(f"lag {lag} outside the recorded grid of {n_rec} nodes")
    m = 2 * ens.n
    R = np.diag(np.r_[np.ones(ens.n), -np.ones(ens.n)])
    later, earlier = ens.states[:, lag:], ens.states[:, : n_rec - lag]
    C = np.einsum("bti,btj->bij", later, earlier) / later.shape[1]
    D = C - R @ np.swapaxes(C, 1, 2) @ R
    mean = D.mean(axis=0)
    se = D.std(axis=0, ddof=1) / np.sqrt(ens.n_traj) if ens.n_traj > 1 else np.zeros((m, m))
    mask = se > 0
    max_z = float(np.max(np.abs(mean[mask]) / se[mask])) if mask.any() else 0.0
    return LagTest(mean, se, float(np.abs(mean).max()), max_z)


def write_trajectories_csv(ens: TrajectoryEnsemble, path) -> None:
    n = ens.n
    header = ["t", "traj"] + [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)] + [
        f"u_{i + 1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for b in range(ens.n_traj):
            for k, t in enumerate(ens.times):
                row = [format(t, ".17g"), str(b)]
                row += [format(a, ".17g") for a in ens.states[b, k]]
                row += [format(a, ".17g") for a in ens.controls[b, k]]
                w.writerow(row)


def read_trajectories_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (times, states[traj, k, 2n], controls[traj, k, n])."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader]
    n = sum(h.startswith("x_") for h in header)
    traj = np.array([int(r[1]) for r in rows])
    vals = np.array([[float(a) for i, a in enumerate(r) if i != 1] for r in rows])
    n_traj = traj.max() + 1
    vals = vals.reshape(n_traj, -1, vals.shape[1])
    return vals[0, :, 0], vals[:, :, 1:1 + 2 * n], vals[:, :, 1 + 2 * n:]


def summary_dict(ens: TrajectoryEnsemble, model: OscillatorModel, snapshots=None) -> dict:
    """JSON-ready summary: covariance snapshots, ledger and cost estimate."""
    if snapshots is None:
        snapshots = [ens.times[0], ens.times[-1]]
    cost = girsanov_cost(ens, model)
    out = {
        "n_traj": ens.n_traj,
        "dt": ens.dt,
        "covariance": [
            {"t": float(t), "cov": empirical_covariance(ens, t).tolist(),
             "std_error": covariance_standard_error(ens, t).tolist()}
            for t in snapshots
        ] if ens.n_traj >= 2 else [],
        "energy_ledger": energy_ledger(ens, model).to_dict(),
        "cost": {"estimate": cost.estimate, "std_error": cost.std_error},
    }
    return out


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")
