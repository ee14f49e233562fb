"""Numerical laboratory for parabolic operators ``dt - div(A grad)`` with BMO antisymmetric part."""

__version__ = "0.1.0"

from .coefficients import CoefficientField, GeneratorSpec, generate
from .config import ExperimentConfig
from .lattice import GridSpec
from .operator import ParabolicOperator
from .resolvent import SolverConfig, resolvent

__all__ = [
    "__version__",
    "GridSpec",
    "GeneratorSpec",
    "CoefficientField",
    "generate",
    "ParabolicOperator",
    "SolverConfig",
    "resolvent",
    "ExperimentConfig",
]
