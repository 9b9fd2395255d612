"""Exception types raised across the package."""

from __future__ import annotations


class RobinScatterError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RobinScatterError, ValueError):
    """Inconsistent or unsupported configuration (grid, model, geometry)."""


class AssumptionViolation(ConfigurationError):
    """A modelling assumption is violated; ``label`` names it, e.g. ``"(A3)"``."""

    def __init__(self, label: str, message: str):
        self.label = label
        super().__init__(f"{label} violated: {message}")


class DomainError(RobinScatterError, ValueError):
    """Evaluation point outside the admissible domain."""


class SingularityError(DomainError):
    """Evaluation at a kernel singularity."""


class AliasingError(ConfigurationError):
    """Wavenumber not resolved by the grid."""


class AccuracyError(ConfigurationError):
    """Requested quadrature would be under-resolved."""


class ContractError(RobinScatterError, ValueError):
    """Input violates an operation's precondition."""


class SolverError(RobinScatterError, RuntimeError):
    """Iterative solver failed to converge."""

    def __init__(self, message: str, residual_history=None):
        self.residual_history = list(residual_history or [])
        super().__init__(message)


class ModelMismatchError(RobinScatterError, RuntimeError):
    """Data cannot be explained by the forward model within the noise level."""


class InconsistencyError(RobinScatterError, RuntimeError):
    """Supplied prior information contradicts the data."""
