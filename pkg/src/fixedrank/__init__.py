"""Low-rank matrix estimation solvers with exact local rate prediction."""

from . import analysis, linalg, manifold, operators, oracle, solvers
from .analysis import SpectralReport, projected_theta_spectrum
from .manifold import FixedRankPoint, TangentVector
from .operators import (
    EnsembleOperator,
    MaskOperator,
    ProblemInstance,
    build_theta,
    generate_instance,
    random_init,
    spectral_init,
)
from .solvers import IterationTrace, SolverConfig, fitted_rate, run

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "linalg",
    "manifold",
    "operators",
    "oracle",
    "solvers",
    "SpectralReport",
    "projected_theta_spectrum",
    "FixedRankPoint",
    "TangentVector",
    "EnsembleOperator",
    "MaskOperator",
    "ProblemInstance",
    "build_theta",
    "generate_instance",
    "random_init",
    "spectral_init",
    "IterationTrace",
    "SolverConfig",
    "fitted_rate",
    "run",
]
