"""Frequentist inference from posterior draws.

The posterior covariance of a working-likelihood posterior does not match
the sampling covariance of the posterior mean, so intervals built directly
from posterior quantiles are not calibrated. This module applies the
sandwich-style correction ``Sigma_adj = n tau (1 - tau) Sigma D_hat Sigma``
and inflates each interval by a data-driven weight
``eta_j = min(sqrt(n) lam, max(1, lam / |beta_hat_j|))`` so that coverage
adapts to sparsity: near-oracle intervals for clearly nonzero
coefficients, conservative but fast-shrinking intervals for the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import ndtri

from .core import Dataset, validate_tau
from .priors import PriorSpec
from .sampler import Chain, Diagnostics, SamplerConfig, diagnostics, run_chains
from .solver import qr_fit

__all__ = [
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
]

#: Soft-failure thresholds for sampler diagnostics.
MAX_RHAT = 1.05
MIN_ESS = 100.0


def posterior_moments(chain: Chain) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance (denominator m - 1) of the pooled draws."""
    draws = chain.draws
    m = draws.shape[0]
    if m < 2:
        raise ValueError(f"chain too short for moments: need >= 2 draws, got {m}")
    mean = draws.mean(axis=0)
    cov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=1))
    return mean, (cov + cov.T) / 2.0


def compute_d_hat(data: Dataset) -> np.ndarray:
    """Second-moment matrix of the design rows, ``X'X / n`` (intercept included)."""
    d_hat = data.x.T @ data.x / data.n
    return (d_hat + d_hat.T) / 2.0


def adjust_covariance(sigma_check: np.ndarray, d_hat: np.ndarray, n: int, tau: float) -> np.ndarray:
    """Sandwich-adjusted covariance ``n tau (1 - tau) Sigma D Sigma``, symmetrized."""
    tau = validate_tau(tau)
    sigma_check = np.asarray(sigma_check, dtype=np.float64)
    d_hat = np.asarray(d_hat, dtype=np.float64)
    if sigma_check.ndim != 2 or sigma_check.shape[0] != sigma_check.shape[1]:
        raise ValueError(f"sigma_check must be square, got shape {sigma_check.shape}")
    if d_hat.shape != sigma_check.shape:
        raise ValueError(
            f"d_hat shape {d_hat.shape} does not match sigma_check shape {sigma_check.shape}"
        )
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    adj = n * tau * (1.0 - tau) * (sigma_check @ d_hat @ sigma_check)
    return (adj + adj.T) / 2.0


def adjustment_weight(lam: float, n: int, beta_hat_j: float) -> float:
    """Interval inflation ``min(sqrt(n) lam, max(1, lam / |beta_hat_j|))``.

    ``beta_hat_j`` is the full-model fitted coefficient; an exact zero is
    treated as the limit ``lam / 0 = +inf``.
    """
    if lam <= 0 or not np.isfinite(lam):
        raise ValueError(f"lam must be positive and finite, got {lam}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    b = abs(float(beta_hat_j))
    inner = math.inf if b == 0.0 else lam / b
    return min(math.sqrt(n) * lam, max(1.0, inner))


def _adjustment_weights(prior: PriorSpec, n: int, beta_hat: np.ndarray) -> np.ndarray:
    """Inflation vector with eta_0 = 1; all ones under the flat prior."""
    d = beta_hat.size
    eta = np.ones(d)
    if prior.family != "flat":
        for j in range(1, d):
            eta[j] = adjustment_weight(prior.lam, n, beta_hat[j])
    return eta


def confidence_intervals(
    beta_check: np.ndarray, sigma_adj: np.ndarray, eta: np.ndarray, alpha: float
) -> np.ndarray:
    """Per-coefficient intervals ``beta_check_j +/- z_{alpha/2} eta_j sqrt(Sigma_adj(j,j))``.

    Returns an (p+1, 2) array of (lo, hi). Diagonal entries of
    ``sigma_adj`` below -1e-12 raise; tiny negatives are clamped to zero.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    beta_check = np.asarray(beta_check, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    diag = np.diag(np.asarray(sigma_adj, dtype=np.float64)).copy()
    if np.any(diag < -1e-12):
        raise ValueError(
            f"adjusted covariance has a negative diagonal entry: min={diag.min():.3e}"
        )
    diag = np.clip(diag, 0.0, None)
    z = float(ndtri(1.0 - alpha / 2.0))
    half = z * eta * np.sqrt(diag)
    return np.column_stack([beta_check - half, beta_check + half])


def credible_intervals(chain: Chain, alpha: float) -> np.ndarray:
    """Equal-tailed posterior quantile intervals (debugging aid, not calibrated)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lo = np.quantile(chain.draws, alpha / 2.0, axis=0)
    hi = np.quantile(chain.draws, 1.0 - alpha / 2.0, axis=0)
    return np.column_stack([lo, hi])


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior moments, adjusted covariance, and adaptive intervals."""

    names: Tuple[str, ...]
    beta_check: np.ndarray  # posterior mean
    sigma_check: np.ndarray  # raw posterior covariance
    d_hat: np.ndarray
    sigma_adj: np.ndarray
    eta: np.ndarray
    intervals: np.ndarray  # (p+1, 2)
    alpha: float
    tau: float
    n: int
    family: str
    lam: Optional[float]
    beta_hat: np.ndarray  # full-model check-loss minimizer
    ess: np.ndarray
    split_rhat: np.ndarray
    acceptance_rate: float
    soft_fail: bool
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def se_adj(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sigma_adj), 0.0, None))

    @property
    def min_ess(self) -> float:
        return float(self.ess.min())

    @property
    def max_rhat(self) -> float:
        return float(self.split_rhat.max())


def fit_and_infer(
    data: Dataset,
    tau: float,
    prior: PriorSpec,
    cfg: Optional[SamplerConfig] = None,
    alpha: float = 0.10,
) -> PosteriorSummary:
    """Full pipeline: fit, sample, adjust, and build adaptive intervals.

    Diagnostics failures (max split-Rhat above 1.05 or min ESS below 100)
    set ``soft_fail`` and a descriptive flag instead of raising, as does an
    extreme sampler acceptance rate.
    """
    tau = validate_tau(tau)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    cfg = cfg or SamplerConfig()
    fit = qr_fit(data, tau)
    prior = prior.resolved(n=data.n, beta_hat=fit.beta_hat)
    prior.validate_for(data.p)
    chain = run_chains(data, tau, prior, cfg, center=fit.beta_hat)
    diag = diagnostics(chain)

    beta_check, sigma_check = posterior_moments(chain)
    d_hat = compute_d_hat(data)
    sigma_adj = adjust_covariance(sigma_check, d_hat, data.n, tau)
    eta = _adjustment_weights(prior, data.n, fit.beta_hat)
    intervals = confidence_intervals(beta_check, sigma_adj, eta, alpha)

    flags: List[str] = []
    if diag.max_rhat > MAX_RHAT:
        flags.append(f"max split-Rhat {diag.max_rhat:.4f} exceeds {MAX_RHAT}")
    if diag.min_ess < MIN_ESS:
        flags.append(f"min ESS {diag.min_ess:.1f} below {MIN_ESS:.0f}")
    if chain.warning is not None:
        flags.append(chain.warning)
    if not fit.converged:
        flags.append("check-loss fit did not certify optimality")

    return PosteriorSummary(
        names=data.names,
        beta_check=beta_check,
        sigma_check=sigma_check,
        d_hat=d_hat,
        sigma_adj=sigma_adj,
        eta=eta,
        intervals=intervals,
        alpha=alpha,
        tau=tau,
        n=data.n,
        family=prior.family,
        lam=prior.lam,
        beta_hat=fit.beta_hat,
        ess=diag.ess,
        split_rhat=diag.split_rhat,
        acceptance_rate=chain.acceptance_rate,
        soft_fail=diag.max_rhat > MAX_RHAT or diag.min_ess < MIN_ESS,
        flags=tuple(flags),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def summary_to_json(summary: PosteriorSummary) -> str:
    """Serialize a summary as JSON with round-trip-exact float encoding."""
    import json

    obj = {
        "coef": list(summary.names),
        "mean": [float(v) for v in summary.beta_check],
        "ci_lo": [float(v) for v in summary.intervals[:, 0]],
        "ci_hi": [float(v) for v in summary.intervals[:, 1]],
        "eta": [float(v) for v in summary.eta],
        "se_adj": [float(v) for v in summary.se_adj],
        "ess": [float(v) for v in summary.ess],
        "rhat": [float(v) for v in summary.split_rhat],
        "meta": {
            "tau": summary.tau,
            "alpha": summary.alpha,
            "n": summary.n,
            "prior": summary.family,
            "lambda": summary.lam,
            "acceptance_rate": summary.acceptance_rate,
            "soft_fail": summary.soft_fail,
            "flags": list(summary.flags),
        },
    }
    return json.dumps(obj, indent=2) + "\n"


def summary_to_csv(summary: PosteriorSummary) -> str:
    """Serialize per-coefficient results as aligned CSV text."""
    lines = ["coef,mean,ci_lo,ci_hi,eta,se_adj,ess,rhat"]
    se = summary.se_adj
    for j, name in enumerate(summary.names):
        lines.append(
            ",".join(
                [
                    name,
                    _fmt(summary.beta_check[j]),
                    _fmt(summary.intervals[j, 0]),
                    _fmt(summary.intervals[j, 1]),
                    _fmt(summary.eta[j]),
                    _fmt(se[j]),
                    _fmt(summary.ess[j]),
                    _fmt(summary.split_rhat[j]),
                ]
            )
        )
    return "\n".join(lines) + "\n"
