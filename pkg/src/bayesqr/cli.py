"""Command-line front end: CSV ingestion, fitting, and simulation reports.

Exit codes: 0 on success, 1 on any hard error (including bad flags or
malformed input files), 2 when a fit completes but sampler diagnostics
soft-fail (the summary is still written, with flags set).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from typing import List, Optional

import numpy as np

from .core import Dataset
from .inference import fit_and_infer, summary_to_csv, summary_to_json
from .priors import PriorSpec
from .sampler import SamplerConfig, dump_draws, run_chains
from .simulation import (
    DgpConfig,
    lambda_sweep,
    report_to_table_csv,
    run_monte_carlo,
    sweep_to_csv,
)
from .solver import qr_fit

__all__ = ["load_csv", "write_csv", "main", "entrypoint"]

#: Harness tuning defaults keyed by sample size.
DEFAULT_LAMBDA = {200: 0.066, 500: 0.051}


class UsageError(ValueError):
    """Bad flags or flag values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep 2 for soft-fails only
        raise UsageError(message)


def load_csv(path, weights_column: str = "zeta") -> Dataset:
    """Read a dataset from CSV: one ``y`` column, covariates in file order.

    A column named like ``weights_column`` (default ``zeta``) becomes the
    observation weights. An intercept column is prepended. Malformed or
    non-finite cells raise with their (1-based) data row and column name.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ValueError(f"empty input file: {path}")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise ValueError(f"input file {path} has no column named 'y'")
    if len(rows) < 2:
        raise ValueError(f"input file {path} has a header but no data rows")
    y_col = header.index("y")
    zeta_col = header.index(weights_column) if weights_column in header else None
    cov_cols = [k for k in range(len(header)) if k != y_col and k != zeta_col]

    parsed = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ValueError(
                f"row {i}: expected {len(header)} cells, got {len(row)}"
            )
        for k, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise ValueError(
                    f"malformed numeric value at row {i}, column {header[k]!r}: {cell!r}"
                ) from None
            if not math.isfinite(val):
                raise ValueError(
                    f"non-finite value at row {i}, column {header[k]!r}: {cell!r}"
                )
            parsed[i - 1, k] = val

    n = parsed.shape[0]
    x = np.column_stack([np.ones(n)] + [parsed[:, k] for k in cov_cols])
    names = ("intercept",) + tuple(header[k] for k in cov_cols)
    zeta = parsed[:, zeta_col] if zeta_col is not None else None
    return Dataset(x=x, y=parsed[:, y_col], zeta=zeta, names=names)


def write_csv(data: Dataset, path) -> None:
    """Write a dataset back to CSV (inverse of ``load_csv``, bit-exact floats)."""
    cols = ["y"] + list(data.names[1:])
    mat = [data.y] + [data.x[:, j] for j in range(1, data.p + 1)]
    if data.zeta is not None:
        cols.append("zeta")
        mat.append(data.zeta)
    lines = [",".join(cols)]
    for i in range(data.n):
        lines.append(",".join(repr(float(col[i])) for col in mat))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _check_open_unit(name: str, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise UsageError(f"--{name} must lie strictly in (0, 1), got {value}")
    return float(value)


def _sampler_from_args(args, seed: int) -> SamplerConfig:
    return SamplerConfig(
        chains=args.chains,
        iterations=args.iterations,
        burnin=args.burnin,
        thinning=args.thinning,
        seed=seed,
        init_scale=args.init_scale,
        adapt_window=args.adapt_window,
    )


def _add_sampler_flags(sub):
    sub.add_argument("--chains", type=int, default=4)
    sub.add_argument("--iterations", type=int, default=20000)
    sub.add_argument("--burnin", type=int, default=10000)
    sub.add_argument("--thinning", type=int, default=1)
    sub.add_argument("--init-scale", type=float, default=0.1, dest="init_scale")
    sub.add_argument("--adapt-window", type=int, default=50, dest="adapt_window")


def _parse_lambdas(text: str) -> List[float]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"lambda range must be start:stop:step, got {text!r}")
        start, stop, step = (float(v) for v in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"bad lambda range {text!r}")
        vals = np.arange(start, stop + step / 2.0, step)
        return [float(v) for v in vals]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_fit(args) -> int:
    tau = _check_open_unit("tau", args.tau)
    alpha = _check_open_unit("alpha", args.alpha)
    if args.prior != "flat":
        if args.lam is None:
            raise UsageError(f"--prior {args.prior} requires --lambda")
        if args.lam <= 0:
            raise UsageError(f"--lambda must be positive, got {args.lam}")
    data = load_csv(args.input, weights_column=args.weights_column)
    prior = PriorSpec(args.prior, args.lam) if args.prior != "flat" else PriorSpec("flat")
    cfg = _sampler_from_args(args, args.seed)
    summary = fit_and_infer(data, tau, prior, cfg, alpha)

    json_path = args.out_prefix + ".json"
    csv_path = args.out_prefix + ".csv"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(summary_to_json(summary))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(summary_to_csv(summary))
    if args.dump_draws:
        fit = qr_fit(data, tau)
        chain = run_chains(data, tau, prior.resolved(data.n, fit.beta_hat), cfg, center=fit.beta_hat)
        dump_draws(chain, args.dump_draws)
    print(f"wrote {json_path} and {csv_path}")
    if summary.soft_fail:
        for flag in summary.flags:
            print(f"diagnostic flag: {flag}", file=sys.stderr)
        return 2
    return 0


def _default_lambda(n: int, lam: Optional[float]) -> float:
    if lam is not None:
        if lam <= 0:
            raise UsageError(f"--lambda must be positive, got {lam}")
        return lam
    if n in DEFAULT_LAMBDA:
        return DEFAULT_LAMBDA[n]
    raise UsageError(f"--lambda is required for n={n} (defaults exist only for n in {sorted(DEFAULT_LAMBDA)})")


def cmd_simulate(args) -> int:
    alpha = _check_open_unit("alpha", args.alpha)
    tau = _check_open_unit("tau", args.tau)
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    reps = 2000 if args.full else args.reps
    lam = None if args.prior == "flat" else _default_lambda(args.n, args.lam)
    dgp = DgpConfig(n=args.n, seed=args.seed)
    report = run_monte_carlo(
        dgp,
        args.prior,
        lam,
        alpha=alpha,
        reps=reps,
        weighted=args.weighted,
        tau=tau,
        sampler=_sampler_from_args(args, 0),
        workers=args.workers,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report_to_table_csv(report))
    print(
        f"wrote {args.out} ({reps} reps, n={args.n}, lambda={lam}, "
        f"soft_fails={report.soft_fails}, runtime={report.runtime_s:.1f}s)"
    )
    return 0


def cmd_sweep(args) -> int:
    alpha = _check_open_unit("alpha", args.alpha)
    tau = _check_open_unit("tau", args.tau)
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    reps = 2000 if args.full else args.reps
    lambdas = _parse_lambdas(args.lambdas)
    if not lambdas:
        raise UsageError("--lambdas produced an empty list")
    if any(v <= 0 for v in lambdas):
        raise UsageError("all lambda values must be positive")
    dgp = DgpConfig(n=args.n, seed=args.seed)
    reports = lambda_sweep(
        dgp,
        args.prior,
        lambdas,
        alpha=alpha,
        reps=reps,
        tau=tau,
        sampler=_sampler_from_args(args, 0),
        workers=args.workers,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(sweep_to_csv(reports))
    print(f"wrote {args.out} ({len(lambdas)} lambda values x {reps} reps)")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="bayesqr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one dataset and write an interval summary")
    fit.add_argument("--input", required=True)
    fit.add_argument("--tau", type=float, required=True)
    fit.add_argument("--prior", choices=("al", "ca", "flat"), required=True)
    fit.add_argument("--lambda", type=float, default=None, dest="lam")
    fit.add_argument("--alpha", type=float, default=0.10)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--weights-column", default="zeta", dest="weights_column")
    fit.add_argument("--out-prefix", default="summary", dest="out_prefix")
    fit.add_argument("--dump-draws", default=None, dest="dump_draws")
    _add_sampler_flags(fit)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="Monte Carlo coverage study")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--lambda", type=float, default=None, dest="lam")
    sim.add_argument("--prior", choices=("al", "ca", "flat"), default="ca")
    sim.add_argument("--alpha", type=float, default=0.10)
    sim.add_argument("--tau", type=float, default=0.5)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--full", action="store_true", help="run the full 2000 replications")
    sim.add_argument("--weighted", action="store_true")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--out", default="table.csv")
    _add_sampler_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="coverage study across tuning values")
    swp.add_argument("--n", type=int, required=True)
    swp.add_argument("--lambdas", required=True, help="comma list or start:stop:step range")
    swp.add_argument("--prior", choices=("al", "ca", "flat"), default="ca")
    swp.add_argument("--alpha", type=float, default=0.10)
    swp.add_argument("--tau", type=float, default=0.5)
    swp.add_argument("--reps", type=int, default=200)
    swp.add_argument("--full", action="store_true")
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--workers", type=int, default=None)
    swp.add_argument("--out", default="sweep.csv")
    _add_sampler_flags(swp)
    swp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
