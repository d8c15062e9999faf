"""Exact minimization of the weighted check loss.

The fit is cast as a linear program (residuals split into positive and
negative parts) and solved with HiGHS, which returns a vertex optimum of
the piecewise-linear objective. Optimality is certified afterwards from
one-sided directional derivatives along every coordinate axis, so the
``converged`` flag does not rely on the LP backend's own status alone.

When the minimizer is a face rather than a point (ties), only the
objective value is unique; the reported coefficients are one vertex of the
optimal face. Intercept-only problems short-circuit to the weighted sample
quantile, whose tie-break is the lower endpoint of the minimizing
interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import qr as _pivoted_qr
from scipy.optimize import linprog

from .core import Dataset, neg_working_loglik, validate_tau

__all__ = [
    "SolverOptions",
    "QrFit",
    "RankDeficientError",
    "qr_fit",
    "qr_fit_subset",
    "sample_quantile",
    "subgradient_gap",
]


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for the check-loss solver.

    tol
        Relative tolerance for the subgradient optimality certificate:
        the fit is flagged converged when the worst directional derivative
        is above ``-tol * (1 + |objective|)``.
    max_iter
        Iteration cap handed to the LP backend; ``None`` keeps the
        backend default (effectively unlimited at this problem scale).
    rank_tol
        Columns whose pivoted-QR diagonal falls below ``rank_tol`` times
        the leading diagonal are reported as rank deficient.
    """

    tol: float = 1e-8
    max_iter: Optional[int] = None
    rank_tol: float = 1e-10


@dataclass(frozen=True)
class QrFit:
    """Result of a check-loss minimization.

    beta_hat
        Coefficients (full length; zeros at columns dropped by subset fits).
    objective
        Attained value of the weighted check-loss objective.
    iterations
        Iterations spent by the LP backend (0 for closed-form fits).
    converged
        True when the subgradient certificate holds at ``beta_hat``.
    """

    beta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool


class RankDeficientError(ValueError):
    """Design matrix is numerically rank deficient."""

    def __init__(self, column: int, name: str):
        self.column = column
        self.name = name
        super().__init__(
            f"design matrix is numerically rank deficient at column {column} ({name!r})"
        )


def _weighted_sample_quantile(y: np.ndarray, tau: float, w: np.ndarray) -> float:
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cum = np.cumsum(w[order])
    threshold = tau * cum[-1]
    k = int(np.searchsorted(cum, threshold, side="left"))
    return float(ys[min(k, ys.size - 1)])


def sample_quantile(y, tau: float) -> float:
    """Minimizer of ``sum_i rho_tau(y_i - u)`` over u.

    When the minimizing set is an interval, returns its lower endpoint.
    """
    tau = validate_tau(tau)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("sample_quantile requires a nonempty vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("sample_quantile requires finite values")
    return _weighted_sample_quantile(y, tau, np.ones(y.size))


def subgradient_gap(data: Dataset, tau: float, beta) -> float:
    """Largest violation of coordinatewise optimality at ``beta``.

    Computes the one-sided directional derivatives of the weighted
    check-loss objective along +/- each coordinate axis and returns
    ``max(0, -min(derivatives))``. A value of zero (up to rounding)
    certifies a minimizer.
    """
    tau = validate_tau(tau)
    beta = np.asarray(beta, dtype=np.float64)
    r = data.y - data.x @ beta
    w = data.weights
    zero_tol = 1e-9 * (1.0 + float(np.max(np.abs(data.y))))
    at_kink = np.abs(r) <= zero_tol
    psi = np.where(r < 0.0, tau - 1.0, tau) * w
    psi[at_kink] = 0.0
    base = -(data.x.T @ psi)  # derivative along +e_j from off-kink residuals
    d_plus = base.copy()
    d_minus = -base
    if np.any(at_kink):
        xk = data.x[at_kink]
        wk = w[at_kink]
        h = -xk  # residual derivative along +e_j
        d_plus += (np.maximum(tau * h, (tau - 1.0) * h) * wk[:, None]).sum(axis=0)
        d_minus += (np.maximum(tau * xk, (tau - 1.0) * xk) * wk[:, None]).sum(axis=0)
    worst = min(float(d_plus.min()), float(d_minus.min()))
    return max(0.0, -worst)


def _check_rank(data: Dataset, rank_tol: float) -> None:
    r, piv = _pivoted_qr(data.x, mode="r", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        return
    bad = np.nonzero(diag < rank_tol * diag[0])[0]
    if bad.size:
        col = int(piv[bad[0]])
        raise RankDeficientError(col, data.names[col])


def _solve_lp(data: Dataset, tau: float, opts: SolverOptions):
    n, d = data.n, data.p + 1
    w = data.weights
    c = np.concatenate([np.zeros(d), tau * w, (1.0 - tau) * w])
    a_eq = sp.hstack(
        [sp.csc_matrix(data.x), sp.eye(n, format="csc"), -sp.eye(n, format="csc")],
        format="csc",
    )
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    options = {}
    if opts.max_iter is not None:
        options["maxiter"] = int(opts.max_iter)
    res = linprog(
        c, A_eq=a_eq, b_eq=data.y, bounds=bounds, method="highs", options=options
    )
    if res.x is None:
        raise RuntimeError(f"quantile regression LP failed: {res.message}")
    iterations = int(getattr(res, "nit", 0) or 0)
    return np.asarray(res.x[:d], dtype=np.float64), iterations, bool(res.success)


def qr_fit(data: Dataset, tau: float, opts: Optional[SolverOptions] = None) -> QrFit:
    """Minimize ``sum_i zeta_i rho_tau(y_i - x_i' beta)`` over beta.

    Raises ``RankDeficientError`` when the design has numerically dependent
    columns, and ``ValueError`` when there are fewer observations than
    parameters. A fit that the backend stopped early is returned with
    ``converged=False`` when an iterate is available.
    """
    tau = validate_tau(tau)
    opts = opts or SolverOptions()
    if data.n < data.p + 1:
        raise ValueError(
            f"need at least p+1={data.p + 1} observations, got n={data.n}"
        )
    _check_rank(data, opts.rank_tol)
    if data.p == 0:
        beta = np.array([_weighted_sample_quantile(data.y, tau, data.weights)])
        iterations, backend_ok = 0, True
    else:
        beta, iterations, backend_ok = _solve_lp(data, tau, opts)
    objective = neg_working_loglik(data, tau, beta)
    gap = subgradient_gap(data, tau, beta)
    converged = backend_ok and gap <= opts.tol * (1.0 + abs(objective))
    return QrFit(beta_hat=beta, objective=objective, iterations=iterations, converged=converged)


def qr_fit_subset(
    data: Dataset, tau: float, keep: Iterable[int], opts: Optional[SolverOptions] = None
) -> QrFit:
    """Fit on a column subset, embedding coefficients back into full length.

    ``keep`` must contain 0 (the intercept is always retained). Dropped
    columns get coefficient 0 in the returned ``beta_hat``.
    """
    keep_idx = sorted(set(int(k) for k in keep))
    if not keep_idx or keep_idx[0] != 0:
        raise ValueError("keep must include column 0 (the intercept)")
    if keep_idx[-1] > data.p or keep_idx[0] < 0:
        raise ValueError(f"keep indices must lie in 0..{data.p}, got {keep_idx}")
    sub = Dataset(
        x=data.x[:, keep_idx],
        y=data.y,
        zeta=data.zeta,
        names=tuple(data.names[k] for k in keep_idx),
    )
    fit = qr_fit(sub, tau, opts)
    beta = np.zeros(data.p + 1)
    beta[keep_idx] = fit.beta_hat
    return QrFit(
        beta_hat=beta,
        objective=fit.objective,
        iterations=fit.iterations,
        converged=fit.converged,
    )
