"""Stochastic variance-reduced ADMM for composite regularized models.

Solver variants for strongly convex, general convex, and nonconvex smooth
losses under a linear constraint Ax + By = c, with a hyperparameter advisor,
convergence metrics, and a benchmark CLI.
"""

from .advisor import (
    AdvisorError,
    ProblemConditioning,
    batch_threshold,
    beta,
    conditioning_from_problem,
    convex_bound,
    eta_m_star,
    gamma_min,
    kappa,
    kappa_min,
    nc_condition_check,
    nc_constants,
    rho_star,
    stages_needed,
)
from .kernels import backend_name
from .matspec import (
    ConstraintMatrix,
    MatSpecError,
    SingularityError,
    SpectralSummary,
    min_norm_transpose_solve,
    spectral_extremes,
)
from .metrics import (
    MetricsError,
    ReferenceSolution,
    TraceCollector,
    TraceRecord,
    R_metric,
    aug_lagrangian,
    empirical_vr_variance,
    mean_test_loss,
    prox_grad_norm_sq,
    reference_solve,
)
from .problems import (
    ConstrainedProblem,
    ParseError,
    ProblemError,
    Regularizer,
    SampleSet,
    SmoothSum,
    build_ggfl,
    build_lasso,
    build_tv,
    gen_tv_data,
    graph_from_correlation,
    objective,
    parse_edge_list,
    parse_libsvm,
    soft_threshold,
    write_libsvm,
)
from .solver import (
    ConfigError,
    DivergenceError,
    RunResult,
    SolverConfig,
    solve,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
