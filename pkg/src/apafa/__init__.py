"""Bayesian factor analysis with shared factors and adaptively partitioned
specific factors for data from several studies."""
from .evaluation import (correlation_recovery, evaluate_covariance_recovery,
                         posterior_summary, psi_recovery_roc, rv_coefficient)
from .geweke import geweke_test
from .gibbs import ChainConfig, gibbs_sweep, posterior_predictive_mean, run_chain
from .identifiability import (align_factor_columns, check_nrspc, check_rank_condition,
                              detect_information_switching, switching_prior_bound,
                              truncation_bound, verify_switch_resistance)
from .model import (Dataset, Hyperparameters, ModelState, NumericFailure,
                    PosteriorDraws, SyntheticTruth, marginal_log_likelihood)
from .priors import log_prior_density, sample_prior_state
from .simulation import (ScenarioConfig, fit_and_evaluate, generate_binary,
                         generate_scenario, replicate_study)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "Dataset", "Hyperparameters", "ModelState", "NumericFailure",
    "PosteriorDraws", "ScenarioConfig", "SyntheticTruth", "align_factor_columns",
    "check_nrspc", "check_rank_condition", "correlation_recovery",
    "detect_information_switching", "evaluate_covariance_recovery",
    "fit_and_evaluate", "generate_binary", "generate_scenario", "geweke_test",
    "gibbs_sweep", "log_prior_density", "marginal_log_likelihood",
    "posterior_predictive_mean", "posterior_summary", "psi_recovery_roc",
    "replicate_study", "rv_coefficient", "run_chain", "sample_prior_state",
    "switching_prior_bound", "truncation_bound", "verify_switch_resistance",
]
