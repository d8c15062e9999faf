"""Shrinkage priors on quantile regression coefficients.

Two families concentrate mass at zero for the penalized coordinates:

* ``"al"`` — weighted Laplace, log-density ``-sqrt(n) * lam * sum_j w_j |beta_j|``;
* ``"ca"`` — clipped absolute, log-density ``-n * lam * sum_j min(|beta_j|, lam)``,
  flat wherever ``|beta_j| >= lam``.

The intercept (index 0) always carries an improper flat prior and is never
penalized; ``"flat"`` applies that to every coordinate. Log-densities are
unnormalized with one additive constant shared across all beta, so
differences feed straight into Metropolis acceptance ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = ["PriorSpec", "adaptive_weights", "log_prior", "log_prior_batch", "FAMILIES"]

FAMILIES = ("al", "ca", "flat")

#: Guards w_j = 1 / |beta_hat_j| when a fitted coefficient is exactly zero.
WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class PriorSpec:
    """Prior family plus its tuning inputs.

    family
        One of ``"al"``, ``"ca"``, ``"flat"``.
    lam
        Tuning parameter, required positive for ``"al"`` and ``"ca"``.
    weights
        Adaptive weights, one per covariate (``"al"`` only). May be left
        ``None`` and filled later from a full-model fit via ``resolved``.
    n
        Sample size the penalty is scaled by. May be left ``None`` and
        filled from the dataset via ``resolved``.
    """

    family: str
    lam: Optional[float] = None
    weights: Optional[np.ndarray] = None
    n: Optional[int] = None

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}; use one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if family in ("al", "ca"):
            if self.lam is None or not np.isfinite(self.lam) or self.lam <= 0:
                raise ValueError(f"prior family {family!r} requires lam > 0, got {self.lam!r}")
            object.__setattr__(self, "lam", float(self.lam))
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64, copy=True)
            if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("adaptive weights must be a 1-d vector of positive finite values")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        if self.n is not None:
            n = int(self.n)
            if n < 1:
                raise ValueError(f"n must be >= 1, got {n}")
            object.__setattr__(self, "n", n)

    def resolved(self, n: int, beta_hat=None) -> "PriorSpec":
        """Fill missing pieces: the sample size, and AL weights from a fit."""
        spec = self
        if spec.n is None:
            spec = replace(spec, n=int(n))
        if spec.family == "al" and spec.weights is None:
            if beta_hat is None:
                raise ValueError("AL prior needs adaptive weights or a full-model fit to derive them")
            spec = replace(spec, weights=adaptive_weights(beta_hat))
        return spec

    def validate_for(self, p: int) -> None:
        """Check the spec is complete for a model with ``p`` covariates."""
        if self.family == "flat":
            return
        if self.n is None:
            raise ValueError(f"prior family {self.family!r} requires the sample size n")
        if self.family == "al":
            if self.weights is None:
                raise ValueError("AL prior requires adaptive weights")
            if self.weights.shape != (p,):
                raise ValueError(
                    f"AL weights must have shape ({p},), got {self.weights.shape}"
                )


def adaptive_weights(beta_hat, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Weights ``w_j = 1 / max(|beta_hat_j|, floor)`` for covariates j = 1..p.

    ``beta_hat`` is a full coefficient vector including the intercept at
    index 0, which receives no weight.
    """
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    return 1.0 / np.maximum(np.abs(beta_hat[1:]), floor)


def log_prior_batch(spec: PriorSpec, betas: np.ndarray) -> np.ndarray:
    """Unnormalized log-prior evaluated at each row of ``betas`` (m, p+1)."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 2 or betas.shape[1] < 1:
        raise ValueError(f"betas must be (m, p+1), got shape {betas.shape}")
    m, d = betas.shape
    if spec.family == "flat":
        return np.zeros(m)
    spec.validate_for(d - 1)
    pen = np.abs(betas[:, 1:])
    if spec.family == "al":
        return -np.sqrt(spec.n) * spec.lam * (pen @ spec.weights)
    # ca
    return -spec.n * spec.lam * np.minimum(pen, spec.lam).sum(axis=1)


def log_prior(spec: PriorSpec, beta) -> float:
    """Unnormalized log-prior at a single coefficient vector.

    The intercept never contributes; ``log_prior(0) = 0`` and the value is
    nonpositive for the shrinkage families.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1:
        raise ValueError(f"beta must be a 1-d vector, got ndim={beta.ndim}")
    return float(log_prior_batch(spec, beta[None, :])[0])
