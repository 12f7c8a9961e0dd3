"""Command-line front end.

Exit codes: 0 success, 2 validation error (bad arguments or model file),
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import solve_bridge, write_gains_csv
from .errors import SolverError, ValidationError
from .files import inertial_model, load_model
from .linstat import design_steady_feedback, invariant_gaussian, verify_fd2
from .model import GaussianState, boltzmann_state
from .sim import (
    NoControl,
    ScheduleControl,
    SimConfig,
    SteadyControl,
    SwitchedControl,
    covariance_standard_error,
    dump_json,
    empirical_covariance,
    energy_ledger,
    girsanov_cost,
    simulate_ensemble,
    summary_dict,
    write_trajectories_csv,
)

OUTPUT_ENV = "STOCHOSC_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    _emit(invariant_gaussian(model).to_dict())
    return 0


def cmd_steady(args) -> int:
    model = load_model(args.model)
    fb = design_steady_feedback(model, args.teff)
    _emit({
        "U": fb.U.tolist(),
        "power": fb.power,
        "T_eff": fb.T_eff,
        "optimal": fb.optimal,
        "fd2_residual": verify_fd2(model, fb.U, args.teff).residual.tolist(),
    })
    return 0


def cmd_bridge(args) -> int:
    model = load_model(args.model)
    sol = solve_bridge(model, model.T, args.teff, args.t0, args.t1, args.steps, max_iter=args.max_iter)
    out = _output_dir(args)
    write_gains_csv(sol, out / "gains.csv")
    summary = sol.summary()
    dump_json(summary, out / "bridge_summary.json")
    _emit(summary)
    return 0


def _init_state(model, args) -> GaussianState:
    if args.init == "invariant":
        rep = invariant_gaussian(model)
        if rep.invariant is None:
            raise ValidationError("model has no invariant Gaussian (unstable or uncontrollable)")
        return rep.invariant
    temp = args.init_temp if args.init_temp is not None else model.T
    if args.init == "isotropic":
        return GaussianState(np.zeros(2 * model.n), model.k * temp * np.eye(2 * model.n))
    return boltzmann_state(model, temp)


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    if args.law == "none":
        law = NoControl()
    else:
        if args.teff is None:
            raise ValidationError(f"--teff is required for law {args.law!r}")
        if args.law == "steady":
            law = SteadyControl.from_feedback(design_steady_feedback(model, args.teff))
        else:
            sol = solve_bridge(model, model.T, args.teff, args.t0, args.t1, args.steps)
            if args.law == "bridge":
                law = ScheduleControl(sol)
            else:
                law = SwitchedControl(sol, design_steady_feedback(model, args.teff))
    t_end = args.t_end if args.t_end is not None else args.t1
    cfg = SimConfig(dt=args.dt, t0=args.t0, t_end=t_end, n_traj=args.n_traj, seed=args.seed,
                    record_every=args.record_every)
    ens = simulate_ensemble(model, law, _init_state(model, args), cfg)
    out = _output_dir(args)
    write_trajectories_csv(ens, out / "trajectories.csv")
    summary = summary_dict(ens, model)
    summary["law"] = args.law
    dump_json(summary, out / "summary.json")
    _emit(summary)
    return 0


def run_demo(output_dir, n_traj: int = 1000, seed: int = 42, record_every: int = 10) -> dict:
    """Cool the inertial particle from T = 1/2 to 1/16 on [0, 1] and hold it on [1, 2]."""
    model = inertial_model()
    T, T_eff = 0.5, 1.0 / 16
    sol = solve_bridge(model, T, T_eff, 0.0, 1.0, 1000)
    fb = design_steady_feedback(model, T_eff)
    cfg = SimConfig(dt=1e-3, t0=0.0, t_end=2.0, n_traj=n_traj, seed=seed, record_every=record_every)
    ens = simulate_ensemble(model, SwitchedControl(sol, fb), boltzmann_state(model, T), cfg)
    bridge_only = simulate_ensemble(model, ScheduleControl(sol), boltzmann_state(model, T),
                                    SimConfig(dt=1e-3, t0=0.0, t_end=1.0, n_traj=n_traj, seed=seed,
                                              record_every=1000))

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories_csv(ens, out / "trajectories.csv")
    write_gains_csv(sol, out / "gains.csv")
    with open(out / "controls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "traj", "u_1"])
        for b in range(ens.n_traj):
            for t, u in zip(ens.times, ens.controls[b, :, 0]):
                w.writerow([format(t, ".17g"), b, format(u, ".17g")])

    target = boltzmann_state(model, T_eff).cov
    names = ["xx", "xv", "vv"]
    idx = [(0, 0), (0, 1), (1, 1)]
    with open(out / "covariance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"emp_{s}" for s in names] + [f"se_{s}" for s in names] + [f"theory_{s}" for s in names])
        for t in ens.times:
            C = empirical_covariance(ens, t)
            S = covariance_standard_error(ens, t)
            P = sol.cov.at(t) if t <= sol.t1 else target
            w.writerow([format(t, ".17g")] + [format(C[i], ".17g") for i in idx] +
                       [format(S[i], ".17g") for i in idx] + [format(P[i], ".17g") for i in idx])

    C1, S1 = empirical_covariance(ens, 1.0), covariance_standard_error(ens, 1.0)
    C2, S2 = empirical_covariance(ens, 2.0), covariance_standard_error(ens, 2.0)
    hold = [empirical_covariance(ens, t) for t in ens.times if t >= 1.0]
    cost = girsanov_cost(bridge_only, model)
    summary = {
        "T": T,
        "T_eff": T_eff,
        "n_traj": n_traj,
        "seed": seed,
        "terminal_cov": C1.tolist(),
        "terminal_cov_se": S1.tolist(),
        "terminal_within_3se": bool(np.all(np.abs(C1 - target) <= 3 * S1)),
        "target_cov": target.tolist(),
        "theoretical_terminal_cov": sol.cov.covs[-1].tolist(),
        "cost_estimate": cost.estimate,
        "cost_std_error": cost.std_error,
        "theoretical_cost": sol.expected_cost,
        "shooting_residual": sol.shooting_residual,
        "steady_gain": float(fb.U[0, 0]),
        "steady_power": fb.power,
        "steady_cov_t2": C2.tolist(),
        "steady_cov_t2_se": S2.tolist(),
        "steady_cov_mean_1_2": np.mean(hold, axis=0).tolist(),
        "energy_ledger_extended": energy_ledger(ens, model).to_dict(),
    }
    dump_json(summary, out / "summary.json")
    return summary


def cmd_demo(args) -> int:
    summary = run_demo(_output_dir(args), n_traj=args.n_traj, seed=args.seed, record_every=args.record_every)
    _emit(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochosc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output(sp):
        sp.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or .)")

    a = sub.add_parser("analyze", help="stationary analysis of a quadratic model")
    a.add_argument("model")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("steady", help="minimum-power steady cooling feedback")
    s.add_argument("model")
    s.add_argument("--teff", type=float, required=True)
    s.set_defaults(func=cmd_steady)

    b = sub.add_parser("bridge", help="finite-horizon cooling schedule")
    b.add_argument("model")
    b.add_argument("--teff", type=float, required=True)
    b.add_argument("--t0", type=float, default=0.0)
    b.add_argument("--t1", type=float, default=1.0)
    b.add_argument("--steps", type=int, default=1000)
    b.add_argument("--max-iter", type=int, default=50)
    output(b)
    b.set_defaults(func=cmd_bridge)

    m = sub.add_parser("simulate", help="Monte Carlo ensemble")
    m.add_argument("model")
    m.add_argument("--law", choices=["none", "steady", "bridge", "switched"], default="none")
    m.add_argument("--teff", type=float)
    m.add_argument("--t0", type=float, default=0.0)
    m.add_argument("--t1", type=float, default=1.0)
    m.add_argument("--t-end", type=float)
    m.add_argument("--steps", type=int, default=1000)
    m.add_argument("--dt", type=float, default=1e-3)
    m.add_argument("--n-traj", type=int, default=1000)
    m.add_argument("--seed", type=int, default=42)
    m.add_argument("--record-every", type=int, default=10)
    m.add_argument("--init", choices=["boltzmann", "invariant", "isotropic"], default="boltzmann",
                   help="initial law; isotropic is N(0, kT I) and works for any potential")
    m.add_argument("--init-temp", type=float)
    output(m)
    m.set_defaults(func=cmd_simulate)

    d = sub.add_parser("demo-inertial", help="inertial-particle cooling demo")
    d.add_argument("--n-traj", type=int, default=1000)
    d.add_argument("--seed", type=int, default=42)
    d.add_argument("--record-every", type=int, default=10)
    output(d)
    d.set_defaults(func=cmd_demo)
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0


def main() -> None:
    sys.exit(dispatch())
