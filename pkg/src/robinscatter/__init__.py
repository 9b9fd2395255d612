"""Scattering from a random anisotropic Robin boundary: simulation and recovery.

Modules
-------
field_synth   anisotropic local strengths and Gaussian sampling
forward       half-space Helmholtz solver, Born series, band-averaged data
asymptotics   diagonal asymptotic R(x, x) and the k -> oo law
sradon        anisotropic spherical Radon transform, null space, Fourier slices
recovery      data reduction and anisotropy recovery
pipeline, cli configuration-driven runs with hashed artifacts
"""

from .errors import (AccuracyError, AliasingError, AssumptionViolation, ConfigurationError, ContractError,
                     DomainError, InconsistencyError, ModelMismatchError, RobinScatterError,
                     SingularityError, SolverError)
from .grid import Disk, GridSpec2D

__version__ = "0.1.0"

__all__ = ["AccuracyError", "AliasingError", "AssumptionViolation", "ConfigurationError", "ContractError",
           "Disk", "DomainError", "GridSpec2D", "InconsistencyError", "ModelMismatchError",
           "RobinScatterError", "SingularityError", "SolverError", "__version__"]
