"""Monte Carlo harness for coverage and efficiency studies.

The data-generating process draws AR(1)-correlated Gaussian covariates and
a response whose conditional median is sparse in the covariates while the
noise scale varies with the last covariate. Replications run on
independent counter-based substreams keyed by (seed, replication), so
results are reproducible and independent of execution order, and can be
farmed out to worker processes.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset
from .inference import fit_and_infer
from .priors import PriorSpec
from .sampler import SamplerConfig
from .solver import qr_fit_subset

__all__ = [
    "DgpConfig",
    "SimulationReport",
    "EfficiencyEstimates",
    "dgp_generate",
    "run_monte_carlo",
    "lambda_sweep",
    "estimate_population_matrices",
    "report_to_table_csv",
    "sweep_to_csv",
    "default_scale",
    "unit_scale",
]

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)  # standard normal density at zero

_SEED_MASK = (1 << 64) - 1
_POPULATION_STREAM = 0x9E3779B9


def default_scale(x_last: np.ndarray) -> np.ndarray:
    """Noise scale ``(1 + (x - 1)^2) / 3`` driven by the last covariate."""
    return (1.0 + (x_last - 1.0) ** 2) / 3.0


def unit_scale(x_last: np.ndarray) -> np.ndarray:
    """Homoscedastic override: unit noise scale."""
    return np.ones_like(x_last)


def _mix_seed(master: int, *tags: int) -> int:
    """Derive a well-spread 64-bit subseed from (master, tags)."""
    entropy = (int(master) & _SEED_MASK,) + tuple(int(t) for t in tags)
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DgpConfig:
    """Sparse heteroscedastic median-regression data generator.

    coef
        True coefficients over (intercept, x1, .., xp); zeros mark inactive
        covariates. The default has actives x2 (+3) and x5 (-5).
    rho
        AR(1) correlation of the Gaussian covariates.
    scale_fn
        Noise scale as a function of the last covariate. Must be a
        module-level function if replications run in worker processes.
    """

    n: int
    seed: int = 0
    rho: float = 0.8
    coef: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 3.0, 0.0, 0.0, -5.0, 0.0])
    )
    scale_fn: Callable[[np.ndarray], np.ndarray] = default_scale

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        coef = np.array(self.coef, dtype=np.float64, copy=True)
        if coef.ndim != 1 or coef.size < 2 or not np.all(np.isfinite(coef)):
            raise ValueError("coef must be a finite vector (intercept, x1, .., xp) with p >= 1")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @property
    def p(self) -> int:
        return self.coef.size - 1

    @property
    def active(self) -> Tuple[int, ...]:
        """Design-column indices of the active set, intercept included."""
        return (0,) + tuple(j for j in range(1, self.coef.size) if self.coef[j] != 0.0)


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def response(x_cov: np.ndarray, e: np.ndarray, coef: np.ndarray, scale_fn) -> np.ndarray:
    """Assemble ``y = coef_0 + X coef_1: + scale(x_last) * e``."""
    return coef[0] + x_cov @ coef[1:] + scale_fn(x_cov[:, -1]) * e


def conditional_density_at_zero(x_last: np.ndarray, scale_fn) -> np.ndarray:
    """Density of the noise at zero given the covariates: ``phi(0) / scale``."""
    return PHI0 / scale_fn(x_last)


def dgp_generate(cfg: DgpConfig) -> Tuple[Dataset, np.ndarray, np.ndarray]:
    """Draw one dataset; returns (data, true coefficients, optimal weights).

    The optimal weights are the analytic conditional density of the noise
    at zero for each observation. The returned dataset carries no weights;
    attach them for weighted runs.
    """
    rng = np.random.Generator(
        np.random.Philox(key=np.array([cfg.seed & _SEED_MASK, 0], dtype=np.uint64))
    )
    chol = np.linalg.cholesky(ar1_covariance(cfg.p, cfg.rho))
    x_cov = rng.standard_normal((cfg.n, cfg.p)) @ chol.T
    e = rng.standard_normal(cfg.n)
    y = response(x_cov, e, cfg.coef, cfg.scale_fn)
    data = Dataset(x=np.column_stack([np.ones(cfg.n), x_cov]), y=y)
    zeta = conditional_density_at_zero(x_cov[:, -1], cfg.scale_fn)
    return data, cfg.coef.copy(), zeta


def _interval_hits(lo: np.ndarray, hi: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Inclusive containment per coefficient; an empty interval (lo > hi) never hits."""
    return (lo <= truth) & (truth <= hi)


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated coverage, interval length, and estimator dispersion."""

    method: str
    n: int
    reps: int
    alpha: float
    tau: float
    family: str
    lam: Optional[float]
    weighted: bool
    subset: Optional[Tuple[int, ...]]
    seed: int
    names: Tuple[str, ...]
    true_beta: np.ndarray
    active: Tuple[int, ...]
    coverage_pct: np.ndarray
    coverage_se_pct: np.ndarray
    avg_length_x100: np.ndarray
    length_se_x100: np.ndarray
    inactive_coverage_pct: float
    inactive_coverage_se_pct: float
    inactive_length_x100: float
    inactive_length_se_x100: float
    posterior_mean_sd: np.ndarray
    avg_n_sigma_adj: np.ndarray
    mean_dist_post_oracle: float
    mean_dist_oracle_truth: float
    min_ess: float
    soft_fails: int
    degenerate_se: bool
    runtime_s: float


def _sampler_with_seed(cfg: SamplerConfig, seed: int) -> SamplerConfig:
    return SamplerConfig(
        chains=cfg.chains,
        iterations=cfg.iterations,
        burnin=cfg.burnin,
        thinning=cfg.thinning,
        seed=seed,
        init_scale=cfg.init_scale,
        adapt_window=cfg.adapt_window,
    )


def _run_rep(args) -> dict:
    """One replication; module-level so worker processes can pickle it."""
    (dgp, family, lam, alpha, tau, weighted, subset, sampler_cfg, master_seed, rep) = args
    data_seed = _mix_seed(master_seed, rep, 0)
    samp_seed = _mix_seed(master_seed, rep, 1)
    data, beta0, zeta = dgp_generate(replace(dgp, seed=data_seed))
    d = beta0.size
    active = list(dgp.active)

    fit_data = data
    if weighted:
        fit_data = Dataset(x=data.x, y=data.y, zeta=zeta, names=data.names)
    cols = list(range(d))
    if subset is not None:
        cols = sorted(set(subset))
        fit_data = Dataset(
            x=fit_data.x[:, cols],
            y=fit_data.y,
            zeta=fit_data.zeta,
            names=tuple(data.names[k] for k in cols),
        )

    prior = PriorSpec(family, lam) if family != "flat" else PriorSpec("flat")
    summary = fit_and_infer(
        fit_data, tau, prior, _sampler_with_seed(sampler_cfg, samp_seed), alpha
    )

    lo = np.zeros(d)
    hi = np.zeros(d)
    beta_check = np.zeros(d)
    n_sigma_adj = np.full(d, np.nan)
    lo[cols] = summary.intervals[:, 0]
    hi[cols] = summary.intervals[:, 1]
    beta_check[cols] = summary.beta_check
    n_sigma_adj[cols] = data.n * np.diag(summary.sigma_adj)

    # Oracle refit on the true active columns, always unweighted.
    oracle = qr_fit_subset(data, tau, active).beta_hat
    dist_po = float(np.linalg.norm(beta_check[active] - oracle[active]))
    dist_ot = float(np.linalg.norm(oracle[active] - beta0[active]))

    return {
        "lo": lo,
        "hi": hi,
        "beta_check": beta_check,
        "n_sigma_adj": n_sigma_adj,
        "dist_po": dist_po,
        "dist_ot": dist_ot,
        "min_ess": summary.min_ess,
        "soft_fail": summary.soft_fail,
    }


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BAYESQR_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return 1


def summarize_reps(
    rep_results: Sequence[dict],
    dgp: DgpConfig,
    names: Tuple[str, ...],
    method: str,
    alpha: float,
    tau: float,
    family: str,
    lam: Optional[float],
    weighted: bool,
    subset: Optional[Tuple[int, ...]],
    seed: int,
    runtime_s: float,
) -> SimulationReport:
    """Aggregate per-replication interval records into a report."""
    reps = len(rep_results)
    if reps < 1:
        raise ValueError("need at least one replication")
    truth = dgp.coef
    d = truth.size
    active = dgp.active
    inactive = tuple(j for j in range(1, d) if j not in active)

    lo = np.stack([r["lo"] for r in rep_results])
    hi = np.stack([r["hi"] for r in rep_results])
    hits = _interval_hits(lo, hi, truth[None, :])
    lengths = hi - lo

    cov_frac = hits.mean(axis=0)
    coverage_pct = 100.0 * cov_frac
    coverage_se_pct = 100.0 * np.sqrt(cov_frac * (1.0 - cov_frac) / reps)
    avg_length = lengths.mean(axis=0)
    with np.errstate(invalid="ignore"):
        length_se = lengths.std(axis=0, ddof=1) / math.sqrt(reps)
    degenerate = reps < 2

    if inactive:
        inact_hit = hits[:, inactive].mean(axis=1)
        inact_len = lengths[:, inactive].mean(axis=1)
        inactive_cov = 100.0 * float(inact_hit.mean())
        inactive_cov_se = 100.0 * float(inact_hit.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
        inactive_len = 100.0 * float(inact_len.mean())
        inactive_len_se = 100.0 * float(inact_len.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    else:
        inactive_cov = inactive_cov_se = inactive_len = inactive_len_se = float("nan")

    beta_checks = np.stack([r["beta_check"] for r in rep_results])
    with np.errstate(invalid="ignore"):
        post_sd = beta_checks.std(axis=0, ddof=1)
    n_sigma = np.stack([r["n_sigma_adj"] for r in rep_results]).mean(axis=0)

    return SimulationReport(
        method=method,
        n=dgp.n,
        reps=reps,
        alpha=alpha,
        tau=tau,
        family=family,
        lam=lam,
        weighted=weighted,
        subset=subset,
        seed=seed,
        names=names,
        true_beta=truth.copy(),
        active=active,
        coverage_pct=coverage_pct,
        coverage_se_pct=coverage_se_pct,
        avg_length_x100=100.0 * avg_length,
        length_se_x100=100.0 * length_se,
        inactive_coverage_pct=inactive_cov,
        inactive_coverage_se_pct=inactive_cov_se,
        inactive_length_x100=inactive_len,
        inactive_length_se_x100=inactive_len_se,
        posterior_mean_sd=post_sd,
        avg_n_sigma_adj=n_sigma,
        mean_dist_post_oracle=float(np.mean([r["dist_po"] for r in rep_results])),
        mean_dist_oracle_truth=float(np.mean([r["dist_ot"] for r in rep_results])),
        min_ess=float(min(r["min_ess"] for r in rep_results)),
        soft_fails=int(sum(r["soft_fail"] for r in rep_results)),
        degenerate_se=degenerate,
        runtime_s=runtime_s,
    )


def run_monte_carlo(
    dgp: DgpConfig,
    family: str,
    lam: Optional[float] = None,
    alpha: float = 0.10,
    reps: int = 200,
    weighted: bool = False,
    tau: float = 0.5,
    sampler: Optional[SamplerConfig] = None,
    subset: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
    method: Optional[str] = None,
) -> SimulationReport:
    """Coverage study: fresh dataset, inference, and interval bookkeeping per rep.

    ``weighted`` attaches the true conditional-density weights to the
    working likelihood. ``subset`` restricts the fitted model to the given
    design columns (0 must be included); excluded coefficients report the
    singleton interval {0}. The sampler seed is re-derived per replication
    from the DGP seed, so results do not depend on execution order.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if family != "flat" and lam is None:
        raise ValueError(f"prior family {family!r} requires lam")
    sampler = sampler or SamplerConfig()
    subset_t = tuple(sorted(set(int(k) for k in subset))) if subset is not None else None
    if subset_t is not None and (not subset_t or subset_t[0] != 0):
        raise ValueError("subset must include column 0 (the intercept)")
    if method is None:
        method = family + ("-weighted" if weighted else "") + ("-subset" if subset_t else "")

    args = [
        (dgp, family, lam, alpha, tau, weighted, subset_t, sampler, dgp.seed, rep)
        for rep in range(reps)
    ]
    n_workers = _resolve_workers(workers)
    start = time.perf_counter()
    if n_workers > 1:
        results: List[dict] = [None] * reps  # type: ignore[list-item]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for rep, out in enumerate(pool.map(_run_rep, args, chunksize=1)):
                results[rep] = out
    else:
        results = [_run_rep(a) for a in args]
    runtime = time.perf_counter() - start

    names = ("intercept",) + tuple(f"x{j}" for j in range(1, dgp.p + 1))
    return summarize_reps(
        results, dgp, names, method, alpha, tau, family, lam, weighted, subset_t,
        dgp.seed, runtime,
    )


def lambda_sweep(
    dgp: DgpConfig,
    family: str,
    lambdas: Sequence[float],
    alpha: float = 0.10,
    reps: int = 200,
    **kwargs,
) -> List[SimulationReport]:
    """One coverage study per tuning value, sharing replication streams."""
    lams = [float(v) for v in lambdas]
    if not lams:
        raise ValueError("lambda sweep requires a nonempty list of tuning values")
    return [run_monte_carlo(dgp, family, lam, alpha=alpha, reps=reps, **kwargs) for lam in lams]


def _fmt(x: float) -> str:
    return repr(float(x))


def report_to_table_csv(reports) -> str:
    """Per-coefficient coverage/length table, one block of rows per report."""
    if isinstance(reports, SimulationReport):
        reports = [reports]
    lines = ["method,n,coefficient,coverage,coverage_se,length_x100,length_se_x100"]
    for rep in reports:
        for j, name in enumerate(rep.names):
            lines.append(
                ",".join(
                    [
                        rep.method,
                        str(rep.n),
                        name,
                        _fmt(rep.coverage_pct[j]),
                        _fmt(rep.coverage_se_pct[j]),
                        _fmt(rep.avg_length_x100[j]),
                        _fmt(rep.length_se_x100[j]),
                    ]
                )
            )
        lines.append(
            ",".join(
                [
                    rep.method,
                    str(rep.n),
                    "inactive_avg",
                    _fmt(rep.inactive_coverage_pct),
                    _fmt(rep.inactive_coverage_se_pct),
                    _fmt(rep.inactive_length_x100),
                    _fmt(rep.inactive_length_se_x100),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def sweep_to_csv(reports: Sequence[SimulationReport]) -> str:
    """Tidy (lambda, coefficient, coverage, length) rows for plotting."""
    lines = ["lambda,coefficient,coverage,length_x100"]
    for rep in reports:
        for j, name in enumerate(rep.names):
            lines.append(
                ",".join(
                    [_fmt(rep.lam), name, _fmt(rep.coverage_pct[j]), _fmt(rep.avg_length_x100[j])]
                )
            )
        lines.append(
            ",".join(
                [
                    _fmt(rep.lam),
                    "inactive_avg",
                    _fmt(rep.inactive_coverage_pct),
                    _fmt(rep.inactive_length_x100),
                ]
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EfficiencyEstimates:
    """Monte Carlo estimates of the population design/density matrices.

    All matrices are (s+1) x (s+1), indexed by the active set (intercept
    first). ``g_s_direct`` re-estimates ``g_s`` from the pointwise density
    instead of the quadrature-integrated one; by iterated expectations the
    two agree in the limit, which makes it a cross-check of the quadrature.
    """

    q_s: np.ndarray  # E[x_S x_S' f(0|X)^2]
    v_s: np.ndarray  # E[x_S x_S' f(0|X_S)^2]
    g_s: np.ndarray  # E[x_S x_S' f(0|X_S)]
    d_s: np.ndarray  # E[x_S x_S']
    g_s_direct: np.ndarray
    active: Tuple[int, ...]
    draws: int


def estimate_population_matrices(
    dgp: DgpConfig,
    draws: int,
    nodes: int = 64,
    chunk: int = 100_000,
    seed: Optional[int] = None,
) -> EfficiencyEstimates:
    """Estimate the active-set second-moment matrices by Monte Carlo.

    The density given only the active covariates has no closed form when
    the scale-driving covariate is inactive; it is integrated out with
    Gauss-Hermite quadrature over its Gaussian conditional distribution.
    Requires at least 1e5 draws.
    """
    if draws < 100_000:
        raise ValueError(f"insufficient draws: need >= 100000, got {draws}")
    if nodes < 2:
        raise ValueError(f"need >= 2 quadrature nodes, got {nodes}")
    p = dgp.p
    active_cov = [j - 1 for j in dgp.active if j >= 1]
    s1 = len(active_cov) + 1
    sigma = ar1_covariance(p, dgp.rho)
    chol = np.linalg.cholesky(sigma)
    last = p - 1
    integrate_last = last not in active_cov
    if integrate_last:
        coef_cond = np.linalg.solve(sigma[np.ix_(active_cov, active_cov)], sigma[active_cov, last])
        var_cond = float(sigma[last, last] - sigma[last, active_cov] @ coef_cond)
        gh_t, gh_w = np.polynomial.hermite.hermgauss(nodes)
        gh_w = gh_w / math.sqrt(math.pi)

    rng = np.random.Generator(
        np.random.Philox(
            key=np.array(
                [(dgp.seed if seed is None else seed) & _SEED_MASK, _POPULATION_STREAM],
                dtype=np.uint64,
            )
        )
    )

    q_s = np.zeros((s1, s1))
    v_s = np.zeros((s1, s1))
    g_s = np.zeros((s1, s1))
    g_s_direct = np.zeros((s1, s1))
    d_s = np.zeros((s1, s1))
    left = draws
    while left > 0:
        m = min(chunk, left)
        left -= m
        x_cov = rng.standard_normal((m, p)) @ chol.T
        xs = np.column_stack([np.ones(m), x_cov[:, active_cov]])
        fx = conditional_density_at_zero(x_cov[:, last], dgp.scale_fn)
        if integrate_last:
            mu = x_cov[:, active_cov] @ coef_cond
            nodes_x = math.sqrt(2.0 * var_cond) * gh_t[None, :] + mu[:, None]
            fxs = conditional_density_at_zero(nodes_x, dgp.scale_fn) @ gh_w
        else:
            fxs = fx
        d_s += np.einsum("ni,nj->ij", xs, xs)
        g_s += np.einsum("ni,nj,n->ij", xs, xs, fxs)
        g_s_direct += np.einsum("ni,nj,n->ij", xs, xs, fx)
        q_s += np.einsum("ni,nj,n->ij", xs, xs, fx**2)
        v_s += np.einsum("ni,nj,n->ij", xs, xs, fxs**2)

    def _sym(a):
        a = a / draws
        return (a + a.T) / 2.0

    return EfficiencyEstimates(
        q_s=_sym(q_s),
        v_s=_sym(v_s),
        g_s=_sym(g_s),
        d_s=_sym(d_s),
        g_s_direct=_sym(g_s_direct),
        active=dgp.active,
        draws=draws,
    )
