"""Core data model for weighted linear quantile regression.

Holds the regression dataset, the asymmetric check loss, and the working
log-likelihood shared by the solver, the posterior sampler, and the
inference layer. Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

__all__ = ["Dataset", "check_loss", "neg_working_loglik", "validate_tau"]


def validate_tau(tau: float) -> float:
    """Validate a quantile level, returning it as a float strictly inside (0, 1)."""
    tau = float(tau)
    if not np.isfinite(tau) or not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie strictly in (0, 1), got {tau!r}")
    return tau


def _frozen_array(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Design matrix with a leading intercept column, response, optional weights.

    Parameters
    ----------
    x : (n, p+1) array
        Design matrix; column 0 must be identically one (the intercept).
    y : (n,) array
        Response vector.
    zeta : (n,) array, optional
        Strictly positive observation weights. ``None`` means unit weights.
    names : tuple of str, optional
        Column names, index 0 being the intercept. Defaults to
        ``("intercept", "x1", ..., "xp")``.

    All arrays are copied and marked read-only; instances are safe to share
    across threads.
    """

    x: np.ndarray
    y: np.ndarray
    zeta: Optional[np.ndarray] = None
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        x = _frozen_array(self.x)
        y = _frozen_array(self.y)
        if x.ndim != 2:
            raise ValueError(f"x must be a 2-d matrix, got ndim={x.ndim}")
        if y.ndim != 1:
            raise ValueError(f"y must be a 1-d vector, got ndim={y.ndim}")
        n = x.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one observation")
        if y.shape[0] != n:
            raise ValueError(f"x has {n} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("column 0 of x must be identically 1 (intercept)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.zeta is not None:
            zeta = _frozen_array(self.zeta)
            if zeta.shape != (n,):
                raise ValueError(f"zeta must have shape ({n},), got {zeta.shape}")
            if not np.all(np.isfinite(zeta)) or np.any(zeta <= 0.0):
                raise ValueError("observation weights must be finite and positive")
            object.__setattr__(self, "zeta", zeta)
        if self.names is None:
            names = ("intercept",) + tuple(f"x{j}" for j in range(1, x.shape[1]))
        else:
            names = tuple(str(s) for s in self.names)
            if len(names) != x.shape[1]:
                raise ValueError(
                    f"names has {len(names)} entries for {x.shape[1]} columns"
                )
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1] - 1

    @property
    def weights(self) -> np.ndarray:
        """Observation weights; ones when no zeta column was supplied."""
        if self.zeta is None:
            return np.ones(self.n)
        return self.zeta


def check_loss(v, tau: float):
    """Asymmetric check loss ``rho_tau(v) = v * (tau - 1{v < 0})``.

    Accepts scalars or arrays. The result is nonnegative and equals zero
    only at ``v = 0``; the indicator at zero is taken as 0 so the loss is
    continuous.
    """
    tau = validate_tau(tau)
    v = np.asarray(v, dtype=np.float64)
    out = v * (tau - (v < 0.0))
    if out.ndim == 0:
        return float(out)
    return out


def neg_working_loglik(data: Dataset, tau: float, beta) -> float:
    """Weighted check-loss objective ``sum_i zeta_i rho_tau(y_i - x_i' beta)``.

    This is the negative log of the asymmetric Laplace working likelihood
    (up to an additive constant). Nonnegative, convex, and piecewise linear
    in ``beta``.
    """
    tau = validate_tau(tau)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (data.p + 1,):
        raise ValueError(
            f"beta must have shape ({data.p + 1},) to match the design, got {beta.shape}"
        )
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta contains non-finite entries")
    r = data.y - data.x @ beta
    terms = check_loss(r, tau)
    if data.zeta is not None:
        terms = terms * data.zeta
    # np.sum uses pairwise accumulation, keeping drift negligible for large n.
    return float(np.sum(terms))
