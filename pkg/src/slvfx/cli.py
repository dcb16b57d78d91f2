"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 runtime error.

Outputs
  price         JSON: estimate, std_error, ci95, n_paths, steps_per_year, seed,
                diagnostics (ABDC only), wall_time (with --timing)
  converge      CSV: steps_per_year,estimate,std_error,difference,diff_std_error,order
  analytics     CSV: alpha,k,xi,sigma_max,zeta,lambda,t_star_L1,t_star_calibration,
                t_star_moments_exact,t_star_moments_fte,explosion_time_exact_cir,
                explosion_time_fte_cir,feller   (infinite horizons print as "inf")
  leverage      CSV: strike,sigma_det[,sigma2_full]
  moment-probe  CSV: steps_per_year,estimate,std_error
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analytics as an
from .config import (build_grid, build_params, build_payoff, build_probe, load_config,
                     read_columns)
from .engine import csv_text, convergence_study, moment_probe, price
from .errors import SlvError, ValidationError
from .leverage import MarketTerms, ParticleCloud, estimate_leverage_det_rates, estimate_leverage_full
from .params import validate

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

ANALYTICS_HEADER = ("alpha", "k", "xi", "sigma_max", "zeta", "lambda", "t_star_L1",
                    "t_star_calibration", "t_star_moments_exact", "t_star_moments_fte",
                    "explosion_time_exact_cir", "explosion_time_fte_cir", "feller")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _load_checked(args):
    job, base = load_config(args.config, args.seed)
    params = build_params(job, base)
    report = validate(params)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not report.ok:
        raise ValidationError("; ".join(report.errors()))
    return job, params


def _dump(args) -> bool:
    if not args.dump_config:
        return False
    job, _ = load_config(args.config, args.seed)
    _emit(job.dump(), args.out)
    return True


def cmd_price(args) -> int:
    if _dump(args):
        return EXIT_OK
    job, params = _load_checked(args)
    spec = build_payoff(job, params.s0)
    sim = job.simulation
    res = price(params, build_grid(job), spec, sim.n_paths, sim.seed, sim.batch_size,
                args.threads, args.dump_paths)
    _emit(res.to_json(include_timing=args.timing), args.out)
    return EXIT_OK


def cmd_converge(args) -> int:
    if _dump(args):
        return EXIT_OK
    job, params = _load_checked(args)
    spec = build_payoff(job, params.s0)
    steps = args.steps or job.convergence.steps
    sim = job.simulation
    table = convergence_study(params, spec, steps, sim.n_paths, sim.seed, job.grid.maturity,
                              sim.batch_size, args.threads)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def cmd_moment_probe(args) -> int:
    if _dump(args):
        return EXIT_OK
    job, params = _load_checked(args)
    selector = build_probe(job)
    steps = args.steps or (job.probe.steps if job.probe else None) or [16, 32, 64, 128]
    sim = job.simulation
    table = moment_probe(params, job.grid.maturity, steps, selector, sim.n_paths, sim.seed,
                         sim.batch_size, args.threads)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def analytics_rows(alpha: float, k: float, xi: float, sigma_max: float,
                   theta: float | None = None, lam: float | None = None) -> str:
    zeta = xi * sigma_max
    if lam is None:
        lam = an.lambda_for_moment_order(alpha, zeta, xi)
    values = an.all_critical_maturities(alpha, k, xi, sigma_max, lam)
    if theta is None:
        feller = "unknown"
    else:
        feller = "true" if 2.0 * k * theta > xi * xi else "false"
    row = [_fmt(alpha), _fmt(k), _fmt(xi), _fmt(sigma_max), _fmt(zeta), _fmt(lam)]
    row += [str(v) for v in values.values()] + [feller]
    return ",".join(ANALYTICS_HEADER) + "\n" + ",".join(row) + "\n"


def cmd_analytics(args) -> int:
    _emit(analytics_rows(args.alpha, args.k, args.xi, args.sigma_max, args.theta, args.lam),
          args.out)
    return EXIT_OK


def _cloud(cols: dict[str, np.ndarray]) -> ParticleCloud:
    for name in ("S", "v"):
        if name not in cols:
            raise ValidationError(f"cloud file needs column '{name}'")
    return ParticleCloud(cols["S"], cols["v"], cols.get("D"), cols.get("rd"), cols.get("rf"),
                         cols.get("w"))


def cmd_leverage(args) -> int:
    cloud = _cloud(read_columns(args.cloud))
    lv = read_columns(args.sigma_lv)
    for name in ("K", "sigma_lv"):
        if name not in lv:
            raise ValidationError(f"sigma-lv file needs column '{name}'")
    order = np.argsort(lv["K"])
    lv = {key: col[order] for key, col in lv.items()}
    strikes = args.strikes if args.strikes else list(lv["K"])
    full = (all(c in lv for c in ("fwd_d", "fwd_f", "d2c_dk2"))
            and cloud.discount_d is not None and cloud.rate_d is not None
            and cloud.rate_f is not None)

    def at(name: str, K: float) -> float:
        return float(np.interp(K, lv["K"], lv[name]))

    rows = []
    for K in strikes:
        s_lv = at("sigma_lv", K)
        row = [float(K), estimate_leverage_det_rates(cloud, s_lv, K, args.min_bin)]
        if full:
            market = MarketTerms(at("fwd_d", K), at("fwd_f", K), at("d2c_dk2", K))
            row.append(estimate_leverage_full(cloud, s_lv, K, market, args.min_bin))
        rows.append(row)
    header = ("strike", "sigma_det", "sigma2_full") if full else ("strike", "sigma_det")
    _emit(csv_text(header, rows), args.out)
    return EXIT_OK


def _steps(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("steps must be comma-separated integers") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slvfx", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def job_command(name: str, help_: str):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="job file (YAML or JSON)")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed; overrides SEED and simulation.seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved job config and exit")
        return p

    p = job_command("price", "Monte Carlo price; JSON out")
    p.add_argument("--timing", action="store_true", help="include wall_time in the JSON")
    p.add_argument("--dump-paths", default=None, metavar="DIR",
                   help="write per-batch path CSVs (path,t,S,v,gd,gf) into DIR")
    p.set_defaults(func=cmd_price)

    p = job_command("converge", "convergence table; CSV out")
    p.add_argument("--steps", type=_steps, default=None, help="e.g. 12,24,48,96,192")
    p.set_defaults(func=cmd_converge)

    p = job_command("moment-probe", "moment functional across step sizes; CSV out")
    p.add_argument("--steps", type=_steps, default=None)
    p.set_defaults(func=cmd_moment_probe)

    p = sub.add_parser("analytics", help="critical maturities; CSV out")
    p.add_argument("--alpha", type=float, default=2.0, help="moment order (>= 1)")
    p.add_argument("--k", type=float, required=True, help="variance mean reversion")
    p.add_argument("--xi", type=float, required=True, help="vol of variance")
    p.add_argument("--sigma-max", type=float, required=True, help="leverage upper bound")
    p.add_argument("--theta", type=float, default=None, help="long-run variance, for the Feller flag")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="exponent for the CIR explosion times (default links to alpha)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analytics)

    p = sub.add_parser("leverage", help="leverage from a particle cloud; CSV out")
    p.add_argument("--cloud", required=True,
                   help="CSV with columns S,v and optionally D,rd,rf,w")
    p.add_argument("--sigma-lv", required=True,
                   help="CSV with columns K,sigma_lv and optionally fwd_d,fwd_f,d2c_dk2")
    p.add_argument("--strikes", type=_floats, default=None, help="default: every K in --sigma-lv")
    p.add_argument("--min-bin", type=int, default=50)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_leverage)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SlvError, ArithmeticError, MemoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
