"""Posterior inference for linear quantile regression with shrinkage priors.

Couples the asymmetric Laplace working likelihood with adaptive-Laplace or
clipped-absolute shrinkage priors, corrects the posterior covariance for
likelihood misspecification, and builds confidence intervals whose width
adapts automatically to sparsity. Includes a Monte Carlo harness for
coverage and efficiency studies.
"""

from .core import Dataset, check_loss, neg_working_loglik, validate_tau
from .inference import (
    PosteriorSummary,
    adjust_covariance,
    adjustment_weight,
    compute_d_hat,
    confidence_intervals,
    credible_intervals,
    fit_and_infer,
    posterior_moments,
    summary_to_csv,
    summary_to_json,
)
from .priors import PriorSpec, adaptive_weights, log_prior
from .sampler import Chain, Diagnostics, SamplerConfig, diagnostics, dump_draws, run_chains
from .simulation import (
    DgpConfig,
    EfficiencyEstimates,
    SimulationReport,
    dgp_generate,
    estimate_population_matrices,
    lambda_sweep,
    report_to_table_csv,
    run_monte_carlo,
    sweep_to_csv,
)
from .solver import QrFit, RankDeficientError, SolverOptions, qr_fit, qr_fit_subset, sample_quantile

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "check_loss",
    "neg_working_loglik",
    "validate_tau",
    "QrFit",
    "RankDeficientError",
    "SolverOptions",
    "qr_fit",
    "qr_fit_subset",
    "sample_quantile",
    "PriorSpec",
    "adaptive_weights",
    "log_prior",
    "SamplerConfig",
    "Chain",
    "Diagnostics",
    "run_chains",
    "diagnostics",
    "dump_draws",
    "PosteriorSummary",
    "posterior_moments",
    "compute_d_hat",
    "adjust_covariance",
    "adjustment_weight",
    "confidence_intervals",
    "credible_intervals",
    "fit_and_infer",
    "summary_to_json",
    "summary_to_csv",
    "DgpConfig",
    "SimulationReport",
    "EfficiencyEstimates",
    "dgp_generate",
    "run_monte_carlo",
    "lambda_sweep",
    "estimate_population_matrices",
    "report_to_table_csv",
    "sweep_to_csv",
    "__version__",
]
