"""Gaussian-equivalence laboratory for random-feature regularized ERM."""

__version__ = "0.1.0"

from ._errors import (
    ConfigError,
    ContractViolation,
    DomainError,
    GELError,
    InvalidActivationError,
    SolverError,
)
from ._random import derive_seed, rng_for
from .activations import (
    ACTIVATION_KINDS,
    Activation,
    GaussEquivConstants,
    custom_activation,
    gauss_moments,
    get_activation,
)
from .config import ExperimentConfig, load_config, parse_config_text
from .diagnostics import (
    AdmissibilityReport,
    SmoothTestFn,
    admissibility_check,
    clt_gap,
    covariance_gap,
    mollifier_eval,
    smoothed_indicator_eval,
    window_eval,
)
from .erm import SolveResult, SolverOptions, TiltedObjective, TiltParams, solve, tau_star, training_error
from .estimators import GaussianEquivalentMap, RandomFeatureMap, TiltedERM
from .lab import (
    DerivativeEstimate,
    PathAudit,
    TrialResult,
    UniversalityReport,
    derivative_estimates,
    gaussian_gen_error_closed,
    generalization_error_mc,
    lindeberg_path_audit,
    run_trial,
    sweep_p,
)
from .loo import (
    interpolation_value,
    leave_one_out_solve,
    minimize_quadratic_surrogate,
    moreau,
    prox,
    psi_surrogate,
    quad_solution_identity_check,
    surrogate_hessian,
)
from .losses import LogisticLoss, Ridge, SquaredLoss, get_loss
from .models import (
    Dataset,
    TeacherConfig,
    generate_dataset,
    kernel_regressors,
    sample_feature_matrix,
    sample_teacher,
    surrogate_covariance,
    surrogate_regressors,
)


def bundled_config(name="fig1"):
    """Path of a config file shipped with the package."""
    from importlib.resources import files

    return str(files(__package__) / "configs" / f"{name}.cfg")
