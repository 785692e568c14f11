"""Compliant mechanism synthesis by nonlinear elastic topology optimization
with simultaneously optimized material layout, support locations, actuator
location, and actuator angle.
"""

from .design_field import DesignVector, ProjectionParams
from .material import MaterialParams
from .optimizer import OptimizerConfig, run_optimization
from .problems import ProblemSpec, make_problem
from .solver import SolverConfig

__version__ = "0.1.0"

__all__ = [
    "DesignVector",
    "MaterialParams",
    "OptimizerConfig",
    "ProblemSpec",
    "ProjectionParams",
    "SolverConfig",
    "make_problem",
    "run_optimization",
    "__version__",
]
