"""Sparse linear regression with target-matrix estimators.

A family of l1 estimators parameterized by a target matrix A (denoising,
transductive prediction on an unlabeled design, coefficient estimation),
their two-step transductive variants, empirical verification of the
accompanying probabilistic guarantees, and a Monte Carlo benchmark harness.
"""

from .estimators import (
    Estimate,
    Objective,
    RegressionProblem,
    ScalingInfo,
    compute_scaling,
    dantzig_feasibility_residual,
    fit_generalized_dantzig,
    fit_generalized_lasso,
    soft_threshold_lse,
    surrogate_response,
    target_matrix,
)
from .linalg import cholesky, gram, pseudo_inverse
from .simulate import (
    ExperimentConfig,
    default_grid,
    gen_design,
    gen_response,
    preset,
    run_experiment,
    run_replication,
    summarize,
    support_recovery_lambda,
)
from .solvers import (
    CdOptions,
    LpProblem,
    SolveDiagnostics,
    coordinate_descent_lasso,
    lasso_path,
    simplex_lp,
    soft_threshold,
)
from .transductive import (
    ProximityReport,
    TwoStepConfig,
    check_design_proximity,
    fit_transductive_dantzig,
    fit_transductive_lasso,
    preliminary_labels,
    two_step_fit,
)
from .verify import (
    ConeSpec,
    CoverageReport,
    RestrictedConstantReport,
    lemma1_coverage,
    prop4_sampling,
    restricted_constant,
    theorem_coverage,
)

__version__ = "0.1.0"
