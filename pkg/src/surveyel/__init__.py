"""surveyel: design-aware estimation from informatively sampled surveys.

The package fits model parameters from samples whose selection
probabilities depend on the outcome, by maximizing a conditional
empirical likelihood over simplex weights subject to the model's moment
conditions.  It ships the classical inverse-probability competitors,
several variance estimators, exact unequal-probability sampling schemes
for validation, and a seeded Monte Carlo study harness.

Typical flow::

    pop    = synth_population(4600, 0.33, ("lognormal", 10.0, 1.3), -0.2, seed=1)
    target = pps_first_order(pop.c, n=40)
    draw   = draw_scheme(target, SchemeSpec(kind="tille", n=40, seed=7))
    data   = sample_data(pop, draw)
    fit    = maximize_ce(make_model("proportion"), data, passthrough_visibility(draw))
    vce    = sandwich_vce(fit, data, make_model("proportion"))

The ``surveyel`` command-line tool exposes the same capabilities as the
subcommands ``estimate``, ``simulate``, ``sample``, ``inclusion`` and
``synth``.
"""

from .design import (
    SCHEME_KINDS,
    PpsTarget,
    SchemeSpec,
    draw_scheme,
    estimate_joint_pi_mc,
    midzuno_first_order,
    midzuno_joint_pi,
    pps_first_order,
    scheme_first_order,
    systematic_joint_pi,
    tille_joint_pi_approx,
)
from .el import (
    ELSolution,
    ce_distribution,
    ce_loglik,
    maximize_ce,
    profile_loglik,
    solve_ipw_score,
    solve_kappa,
)
from .errors import (
    ConvergenceError,
    FeasibilityError,
    SchemaError,
    SingularModelError,
    SolverError,
    SurveyELError,
    ValidationError,
)
from .mc import (
    ESTIMATORS,
    VARIANCE_METHODS,
    EstimatorCell,
    MCReport,
    MCStudyConfig,
    VarianceCell,
    coverage,
    run_study,
)
from .model import (
    BUILTIN_MODELS,
    EstimatingFunction,
    check_jacobian,
    linear_score_model,
    logistic_score_model,
    make_model,
    mean_model,
    proportion_model,
)
from .population import (
    Population,
    SampleData,
    SampleDraw,
    census_solution,
    load_population,
    sample_data,
    save_population,
    synth_population,
)
from .variance import (
    VarianceEstimate,
    hajek_mean,
    hartley_rao_var,
    ht_mean,
    kappa_covariance,
    prediction_variance,
    sandwich_vce,
    ygs_var,
)
from .visibility import (
    Visibilities,
    VisibilityModel,
    as_visibilities,
    intercept,
    passthrough_visibility,
    smoothed_visibility,
)

__version__ = "0.1.0"

__all__ = [
    # design
    "SCHEME_KINDS", "PpsTarget", "SchemeSpec", "draw_scheme",
    "estimate_joint_pi_mc", "midzuno_first_order", "midzuno_joint_pi",
    "pps_first_order", "scheme_first_order", "systematic_joint_pi",
    "tille_joint_pi_approx",
    # likelihood solver
    "ELSolution", "ce_distribution", "ce_loglik", "maximize_ce",
    "profile_loglik", "solve_ipw_score", "solve_kappa",
    # errors
    "ConvergenceError", "FeasibilityError", "SchemaError",
    "SingularModelError", "SolverError", "SurveyELError", "ValidationError",
    # study harness
    "ESTIMATORS", "VARIANCE_METHODS", "EstimatorCell", "MCReport",
    "MCStudyConfig", "VarianceCell", "coverage", "run_study",
    # models
    "BUILTIN_MODELS", "EstimatingFunction", "check_jacobian",
    "linear_score_model", "logistic_score_model", "make_model",
    "mean_model", "proportion_model",
    # populations
    "Population", "SampleData", "SampleDraw", "census_solution",
    "load_population", "sample_data", "save_population", "synth_population",
    # variance
    "VarianceEstimate", "hajek_mean", "hartley_rao_var", "ht_mean",
    "kappa_covariance", "prediction_variance", "sandwich_vce", "ygs_var",
    # visibilities
    "Visibilities", "VisibilityModel", "as_visibilities", "intercept",
    "passthrough_visibility", "smoothed_visibility",
    "__version__",
]
