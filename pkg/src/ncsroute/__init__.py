"""H2 impact analysis of multiplicative routing attacks on networked control loops."""

from .bounds import estimate_semigroup, stealth_diagnostic, theorem1_bound, theorem2_bound
from .config import AnalysisConfig, load_config, parse_config
from .errors import (CapUnattainableError, ConfigError, DefectiveEigenstructureError, DegenerateResidualError,
                     DimensionError, MarginError, ModelError, NCSError, NumericalError, PreconditionError,
                     SingularSystemError, UnstableSystemError)
from .h2 import gramian, impact, monte_carlo_energy, output_energies, ratio_trajectory
from .lmi import alpha_feasibility, build_h2_certificate, ratio_by_bisection, verify_h2_certificate
from .numerics import definiteness, matrix_exponential, norms_and_condition, solve_lyapunov
from .search import AxisSpec, SearchOptions, diagonal_sweep, stealthy_search, worst_case_search
from .system import (ClosedLoopSystem, ControllerDesign, PlantModel, assemble_closed_loop, attack_perturbation,
                     classify_stability, validate_design)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "AxisSpec", "CapUnattainableError", "ClosedLoopSystem", "ConfigError",
    "ControllerDesign", "DefectiveEigenstructureError", "DegenerateResidualError", "DimensionError",
    "MarginError", "ModelError", "NCSError", "NumericalError", "PlantModel", "PreconditionError",
    "SearchOptions", "SingularSystemError", "UnstableSystemError",
    "alpha_feasibility", "assemble_closed_loop", "attack_perturbation", "build_h2_certificate",
    "classify_stability", "definiteness", "diagonal_sweep", "estimate_semigroup", "gramian", "impact",
    "load_config", "matrix_exponential", "monte_carlo_energy", "norms_and_condition", "output_energies",
    "parse_config", "ratio_by_bisection", "ratio_trajectory", "solve_lyapunov", "stealth_diagnostic",
    "stealthy_search", "theorem1_bound", "theorem2_bound", "validate_design", "verify_h2_certificate",
    "worst_case_search",
]
