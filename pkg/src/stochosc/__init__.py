"""Cooling of coupled stochastic oscillators.

Phase-space models, invariant-measure analysis, steady cooling feedback,
finite-horizon bridge steering and Monte Carlo verification.
"""

__version__ = "0.1.0"

from .errors import SolverError, StochOscError, ValidationError
from .model import (
    CustomPotential,
    GaussianState,
    OscillatorModel,
    PhaseSpaceMatrices,
    PolynomialPotential,
    QuadraticPotential,
    boltzmann_state,
    build_phase_space,
    build_ring,
    check_fd,
    hamiltonian,
)
from .linstat import (
    SteadyFeedback,
    StationaryReport,
    design_steady_feedback,
    gaussian_kl,
    invariant_gaussian,
    is_controllable,
    is_reversible,
    propagate_covariance,
    solve_lyapunov,
    spectral_abscissa,
    verify_fd2,
)
from .bridge import BoundaryData, BridgeSolution, gain_at, solve_bridge
from .sim import (
    NoControl,
    ScheduleControl,
    SimConfig,
    SteadyControl,
    SwitchedControl,
    TrajectoryEnsemble,
    em_step,
    empirical_covariance,
    energy_ledger,
    girsanov_cost,
    reversibility_lag_test,
    simulate_ensemble,
)
