"""Panel regression with latent groups and group-specific structural breaks."""

from .agfl import (
    AdaptiveWeights,
    AgflOptions,
    agfl_solve_group,
    block_update,
    compute_weights,
    kkt_residuals,
    lambda_max,
    post_lasso,
)
from .errors import (
    DegenerateRegimeError,
    EstimationError,
    GagflError,
    InvalidStructureError,
    PanelFormatError,
    PanelValidationError,
    SimulationError,
    SingularGramError,
)
from .estimator import GagflOptions, fit_gagfl, fit_partial
from .fd import DifferencedPanel, first_difference
from .gfe import GfeOptions, assign_groups, fit_gfe, ols_per_cell
from .metrics import (
    coverage,
    hausdorff,
    misclassification,
    rmse_path,
    unit_paths_from_fit,
)
from .model import (
    BreakStructure,
    CoefficientPath,
    FitResult,
    GroupAssignment,
    Panel,
    expand_regimes,
    infer_breaks,
)
from .selection import LambdaGrid, SelectionReport, bic_groups, fit_lambda_grid, ic_lambda
from .simulate import DgpSpec, SimTruth, StudyConfig, generate, run_study

__version__ = "0.1.0"

__all__ = [
    "AdaptiveWeights",
    "AgflOptions",
    "BreakStructure",
    "CoefficientPath",
    "DgpSpec",
    "DifferencedPanel",
    "DegenerateRegimeError",
    "EstimationError",
    "FitResult",
    "GagflError",
    "GagflOptions",
    "GfeOptions",
    "GroupAssignment",
    "InvalidStructureError",
    "LambdaGrid",
    "Panel",
    "PanelFormatError",
    "PanelValidationError",
    "SelectionReport",
    "SimTruth",
    "SimulationError",
    "SingularGramError",
    "StudyConfig",
    "agfl_solve_group",
    "assign_groups",
    "bic_groups",
    "block_update",
    "compute_weights",
    "coverage",
    "expand_regimes",
    "first_difference",
    "fit_gagfl",
    "fit_gfe",
    "fit_lambda_grid",
    "fit_partial",
    "generate",
    "hausdorff",
    "ic_lambda",
    "infer_breaks",
    "kkt_residuals",
    "lambda_max",
    "misclassification",
    "ols_per_cell",
    "post_lasso",
    "rmse_path",
    "run_study",
    "unit_paths_from_fit",
]
