"""Inertial Krasnoselskii-Mann iterations with relaxation and perturbations."""

from .errors import ConfigurationError, ContractViolation, DomainError, PPMFormatError
from .iteration import RunReport, run, step
from .operators import OperatorFamily
from .schedules import (ParameterSchedule, ParamSequence, PerturbationSchedule,
                        check_feasibility, lambda_bound)

__version__ = "0.1.0"
