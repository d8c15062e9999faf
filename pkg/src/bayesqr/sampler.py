"""Posterior sampling via adaptive random-walk Metropolis.

Chains advance in lockstep on a shared log-density but consume independent
counter-based random streams keyed by (seed, chain index), so a chain's
draws do not depend on how many chains run alongside it and reruns with
the same configuration are bit-identical.

During burn-in each chain learns its own proposal covariance from its own
history (scaled by 2.38^2 / d), with a scalar step-size corrector nudging
the acceptance rate toward 0.234. All adaptation freezes at the end of
burn-in, so the post-burn-in transition kernel is time-homogeneous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Dataset, validate_tau
from .priors import PriorSpec, log_prior_batch
from .solver import qr_fit

__all__ = [
    "SamplerConfig",
    "Chain",
    "Diagnostics",
    "run_chains",
    "diagnostics",
    "sample_adaptive_rwm",
    "dump_draws",
]

TARGET_ACCEPT = 0.234
_U64 = np.uint64
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerConfig:
    """Chain layout, length, and adaptation settings.

    ``iterations`` counts all steps per chain including burn-in; the
    retained sample has ``chains * (iterations - burnin) / thinning`` rows,
    so ``iterations - burnin`` must be divisible by ``thinning``.
    """

    chains: int = 4
    iterations: int = 20000
    burnin: int = 10000
    thinning: int = 1
    seed: int = 0
    init_scale: float = 0.1
    adapt_window: int = 50

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError(
                f"need 0 <= burnin < iterations, got burnin={self.burnin}, iterations={self.iterations}"
            )
        if self.thinning < 1:
            raise ValueError(f"thinning must be >= 1, got {self.thinning}")
        if (self.iterations - self.burnin) % self.thinning != 0:
            raise ValueError("iterations - burnin must be divisible by thinning")
        if not self.init_scale > 0:
            raise ValueError(f"initial proposal scale must be positive, got {self.init_scale}")
        if self.adapt_window < 2:
            raise ValueError(f"adapt_window must be >= 2, got {self.adapt_window}")


@dataclass(frozen=True)
class Chain:
    """Post-burn-in, thinned draws with per-chain structure retained."""

    draws_by_chain: np.ndarray  # (chains, m_per, d)
    log_post_by_chain: np.ndarray  # (chains, m_per)
    accept_rate_by_chain: np.ndarray  # post-burn-in acceptance per chain
    adaptation_updates: int
    burnin: int
    thinning: int
    warning: Optional[str] = None

    @property
    def chains(self) -> int:
        return self.draws_by_chain.shape[0]

    @property
    def dim(self) -> int:
        return self.draws_by_chain.shape[2]

    @property
    def m(self) -> int:
        """Total number of retained draws across chains."""
        return self.draws_by_chain.shape[0] * self.draws_by_chain.shape[1]

    @property
    def draws(self) -> np.ndarray:
        """Pooled (m, d) draws, ordered by chain index."""
        return self.draws_by_chain.reshape(self.m, self.dim)

    @property
    def log_post_trace(self) -> np.ndarray:
        return self.log_post_by_chain.reshape(self.m)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accept_rate_by_chain.mean())


@dataclass(frozen=True)
class Diagnostics:
    """Per-coordinate effective sample size and split potential scale reduction."""

    ess: np.ndarray
    split_rhat: np.ndarray
    min_ess: float
    max_rhat: float


def chain_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based random stream for one chain, keyed by (seed, index)."""
    key = np.array([int(seed) & _SEED_MASK, int(index)], dtype=_U64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_adaptive_rwm(
    log_density: Callable[[np.ndarray], np.ndarray], center: np.ndarray, cfg: SamplerConfig
) -> Chain:
    """Run adaptive random-walk Metropolis chains targeting ``log_density``.

    ``log_density`` maps a (chains, d) batch of states to a (chains,)
    vector of unnormalized log-densities. Chains start at ``center`` plus
    per-chain Gaussian jitter of scale ``0.1 * init_scale``.
    """
    center = np.asarray(center, dtype=np.float64)
    d = center.size
    n_chains, iters, burnin = cfg.chains, cfg.iterations, cfg.burnin
    thin = cfg.thinning
    m_per = (iters - burnin) // thin

    # Per-chain streams; draw order within a stream is jitter, normals, uniforms.
    z = np.empty((iters, n_chains, d))
    log_u = np.empty((iters, n_chains))
    x = np.empty((n_chains, d))
    for c in range(n_chains):
        rng = chain_stream(cfg.seed, c)
        x[c] = center + 0.1 * cfg.init_scale * rng.standard_normal(d)
        z[:, c, :] = rng.standard_normal((iters, d))
        with np.errstate(divide="ignore"):
            log_u[:, c] = np.log(rng.random(iters))

    lp = log_density(x)
    if not np.all(np.isfinite(lp)):
        raise ValueError("non-finite log-posterior at initialization")

    # Proposal state: per-chain Cholesky factor and log step-size multiplier.
    chol = np.tile(cfg.init_scale * np.eye(d), (n_chains, 1, 1))
    log_step = np.zeros(n_chains)
    step_chol = chol.copy()

    # Expanding covariance sums over the burn-in history, centered at `center`
    # for conditioning only (the mean term is subtracted exactly below).
    # The sums restart once mid burn-in so early transients do not
    # contaminate the covariance that gets frozen.
    s1 = np.zeros((n_chains, d))
    s2 = np.zeros((n_chains, d, d))
    hist_count = 0
    reset_at = burnin // 2
    window = np.empty((cfg.adapt_window, n_chains, d))
    window_accepts = np.zeros(n_chains)
    adaptation_updates = 0

    draws = np.empty((n_chains, m_per, d))
    lp_draws = np.empty((n_chains, m_per))
    post_accepts = np.zeros(n_chains)

    scale_factor = 2.38**2 / d
    for t in range(iters):
        prop = x + np.einsum("cij,cj->ci", step_chol, z[t])
        lp_prop = log_density(prop)
        accept = log_u[t] < lp_prop - lp
        x = np.where(accept[:, None], prop, x)
        lp = np.where(accept, lp_prop, lp)

        if t < burnin:
            window[t % cfg.adapt_window] = x
            window_accepts += accept
            if (t + 1) % cfg.adapt_window == 0:
                adaptation_updates += 1
                dev = window - center
                s1 += dev.sum(axis=0)
                s2 += np.einsum("tci,tcj->cij", dev, dev)
                hist_count += cfg.adapt_window
                rate = window_accepts / cfg.adapt_window
                gain = min(1.0, 10.0 / adaptation_updates)
                log_step += gain * (rate - TARGET_ACCEPT)
                window_accepts[:] = 0.0
                if hist_count >= max(2 * d, 20):
                    cov = (s2 - np.einsum("ci,cj->cij", s1, s1) / hist_count) / (
                        hist_count - 1
                    )
                    cov *= scale_factor
                    tr = np.trace(cov, axis1=1, axis2=2)
                    moved = tr > 0
                    if np.any(moved):
                        jitter = 1e-12 * tr / d + 1e-300
                        cov += jitter[:, None, None] * np.eye(d)
                        try:
                            new_chol = np.linalg.cholesky(cov[moved])
                            chol[moved] = new_chol
                        except np.linalg.LinAlgError:
                            pass  # keep the previous factor for this refresh
                step_chol = np.exp(log_step)[:, None, None] * chol
        else:
            post_accepts += accept
            offset = t - burnin
            if offset % thin == 0:
                k = offset // thin
                draws[:, k, :] = x
                lp_draws[:, k] = lp

    if not np.all(np.isfinite(lp_draws)):
        raise RuntimeError("sampler produced draws with non-finite log-posterior")

    accept_rate = post_accepts / (iters - burnin)
    warning = None
    bad = (accept_rate < 0.05) | (accept_rate > 0.95)
    if np.any(bad):
        idx = ", ".join(str(i) for i in np.nonzero(bad)[0])
        warning = (
            f"post-adaptation acceptance rate outside [0.05, 0.95] for chain(s) {idx}: "
            f"{np.round(accept_rate[bad], 3).tolist()}"
        )

    draws.setflags(write=False)
    lp_draws.setflags(write=False)
    return Chain(
        draws_by_chain=draws,
        log_post_by_chain=lp_draws,
        accept_rate_by_chain=accept_rate,
        adaptation_updates=adaptation_updates,
        burnin=burnin,
        thinning=thin,
        warning=warning,
    )


def run_chains(
    data: Dataset,
    tau: float,
    prior: PriorSpec,
    cfg: SamplerConfig,
    center: Optional[np.ndarray] = None,
) -> Chain:
    """Draw from the posterior built from the working likelihood and ``prior``.

    The unnormalized log-posterior is ``-L_n(beta) + log pi(beta)`` where
    ``L_n`` is the weighted check-loss objective. Chains are initialized at
    the full check-loss minimizer (or at ``center`` when the caller already
    fitted it) plus per-chain jitter.
    """
    tau = validate_tau(tau)
    if center is None:
        center = qr_fit(data, tau).beta_hat
    else:
        center = np.asarray(center, dtype=np.float64)
        if center.shape != (data.p + 1,):
            raise ValueError(f"center must have shape ({data.p + 1},), got {center.shape}")
    prior = prior.resolved(n=data.n, beta_hat=center)
    prior.validate_for(data.p)

    x_mat, y = data.x, data.y
    zeta = data.zeta

    def log_post(betas: np.ndarray) -> np.ndarray:
        resid = y[:, None] - x_mat @ betas.T
        loss = np.maximum(tau * resid, (tau - 1.0) * resid)
        if zeta is not None:
            loss *= zeta[:, None]
        return -np.sum(loss, axis=0) + log_prior_batch(prior, betas)

    return sample_adaptive_rwm(log_post, center, cfg)


def _split_sequences(draws_by_chain: np.ndarray) -> np.ndarray:
    n = draws_by_chain.shape[1]
    half = n // 2
    return np.concatenate(
        [draws_by_chain[:, :half], draws_by_chain[:, n - half :]], axis=0
    )


def _autocovariance(seqs: np.ndarray) -> np.ndarray:
    """Biased (divisor T) autocovariance of each sequence via FFT; (S, T, d)."""
    t_len = seqs.shape[1]
    dev = seqs - seqs.mean(axis=1, keepdims=True)
    nfft = 1 << int(2 * t_len - 1).bit_length()
    f = np.fft.rfft(dev, n=nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :t_len]
    return acov / t_len


def diagnostics(chain: Chain) -> Diagnostics:
    """Split potential scale reduction and autocorrelation-sum ESS per coordinate.

    Requires at least 200 retained draws per chain (100 per split half).
    Raises on a constant chain, whose diagnostics are undefined.
    """
    x = chain.draws_by_chain
    n_per = x.shape[1]
    if n_per < 200:
        raise ValueError(
            f"chain too short for diagnostics: need >= 200 retained draws per chain, got {n_per}"
        )
    seqs = _split_sequences(x)  # (S, T, d)
    s_count, t_len, d = seqs.shape
    within = seqs.var(axis=1, ddof=1)
    w = within.mean(axis=0)
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("zero variance: split-Rhat and ESS are undefined for a constant chain")
    means = seqs.mean(axis=1)
    b = t_len * means.var(axis=0, ddof=1)
    var_plus = (t_len - 1) / t_len * w + b / t_len
    split_rhat = np.sqrt(var_plus / w)

    acov = _autocovariance(seqs).mean(axis=0)  # (T, d)
    rho = 1.0 - (w[None, :] - acov) / var_plus[None, :]
    m_total = s_count * t_len
    ess = np.empty(d)
    for j in range(d):
        acc = 0.0
        prev = np.inf
        k = 0
        while 2 * k + 1 < t_len:
            pair = rho[2 * k, j] + rho[2 * k + 1, j]
            if pair <= 0.0:
                break
            pair = min(pair, prev)  # enforce monotone decay (Geyer)
            acc += pair
            prev = pair
            k += 1
        tau_int = max(-1.0 + 2.0 * acc, 1.0 / m_total)
        ess[j] = min(m_total / tau_int, float(m_total))

    return Diagnostics(
        ess=ess,
        split_rhat=split_rhat,
        min_ess=float(ess.min()),
        max_rhat=float(split_rhat.max()),
    )


def dump_draws(chain: Chain, path) -> None:
    """Write retained draws as CSV rows ``chain,iter,beta_0,...,beta_p,log_post``.

    ``iter`` is the absolute iteration index in the original chain
    (burn-in offset plus thinning stride).
    """
    d = chain.dim
    header = "chain,iter," + ",".join(f"beta_{j}" for j in range(d)) + ",log_post"
    lines = [header]
    for c in range(chain.chains):
        for k in range(chain.draws_by_chain.shape[1]):
            it = chain.burnin + k * chain.thinning
            vals = ",".join(repr(float(v)) for v in chain.draws_by_chain[c, k])
            lines.append(f"{c},{it},{vals},{repr(float(chain.log_post_by_chain[c, k]))}")
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
