"""Exception hierarchy.

``ValidationError`` subclasses signal bad input (CLI exit code 2);
``SolverError`` subclasses signal numerical failure (CLI exit code 3).
"""


class StochOscError(Exception):
    """Base class for all package errors."""


class ValidationError(StochOscError, ValueError):
    """Input violates a documented precondition."""


class InvalidModelError(ValidationError):
    """Model matrices violate the oscillator invariants."""


class RingTooSmallError(ValidationError):
    pass


class UnsupportedPotentialError(ValidationError):
    """Operation needs a quadratic potential."""


class HeatingNotCoolingError(ValidationError):
    pass


class ModelFileError(ValidationError):
    """Malformed model file; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InsufficientSamplesError(ValidationError):
    pass


class SolverError(StochOscError, RuntimeError):
    """Numerical routine failed."""


class NoUniqueSolutionError(SolverError):
    pass


class IntegrationDivergedError(SolverError):
    pass


class RiccatiBlowUpError(IntegrationDivergedError):
    """Riccati iterate escaped the blow-up guard."""


class SolverFailedError(SolverError):
    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(message)


class DivergedStepError(SolverError):
    def __init__(self, message: str, trajectory: int | None = None):
        self.trajectory = trajectory
        super().__init__(message)


class DivergenceInfiniteError(SolverError):
    """Relative entropy is infinite (singular reference covariance)."""
