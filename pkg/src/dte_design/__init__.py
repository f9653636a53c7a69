"""Design engine for event-driven survival trials with possibly delayed
treatment effects: prior elicitation, trial simulation, assurance and power."""

__version__ = "0.1.0"

from .analysis import TestResult, TestSpec, is_success, kaplan_meier, run_test, weighted_logrank
from .control_posterior import (
    McmcConfig,
    PosteriorSample,
    SurvivalDataset,
    SurvivalRecord,
    mcmc_weibull_posterior,
    pool,
    read_ipd_csv,
    weibull_loglik,
    weibull_mle,
)
from .dte_fit import DTEFit, TwoArmDataset, fit_control, fit_method_a, fit_method_b
from .elicitation import (
    EffectPrior,
    GammaDist,
    GammaFit,
    QuantileJudgements,
    Scenario,
    fit_gamma_to_quantiles,
    gamma_quantile,
    sample_scenario,
)
from .engine import (
    AssuranceConfig,
    AssuranceResult,
    CurveMatrix,
    FlexConfig,
    GridPointResult,
    ResampleNeeded,
    assurance,
    assurance_curve,
    build_curve_matrix,
    flexible_assurance,
    power,
    power_from_model,
    solve_flexible_params,
)
from .survival import (
    DTEModel,
    WeibullParams,
    control_hazard,
    control_survival,
    experimental_survival,
    hazard_ratio,
    lambda_e_from_hr,
    sample_control_time,
    sample_experimental_time,
)
from .trial import (
    PiecewiseRecruitment,
    PowerRecruitment,
    TrialDataset,
    TrialDesign,
    UniformRecruitment,
    sample_recruitment,
    simulate_trial,
)
