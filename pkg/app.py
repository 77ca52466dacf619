# app.py
"""
Command-line front end.

    python app.py solve --kernel '{"family":"constant","C":1}' --T 2 --h 0.001
    python app.py lambdac --kernel '{"family":"exponential","c":1,"delta":0.5}'
    python app.py mc --kernel '{"family":"constant","C":1}' --N 200 --samples 100 --T 1 --seed 7

Exit codes: 0 success, 2 usage error, 3 numerical/domain error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special

from config import APP_TITLE, DEFAULTS, NCP_DETERMINISTIC_MAX, log_level, output_dir
from utils import artifacts
from utils.asymptotics import fit_exponential_power, fit_lyapunov_only, flat_kernel_limit_check
from utils.bessel import bessel_j_value, semicircle_mgf, smallest_zero
from utils.errors import KraichnanError, UsageError
from utils.kernels import (
    AlgebraicMixed,
    Constant,
    Exponential,
    KernelSpec,
    MixedExponential,
    PowerLaw,
    RatioFlat,
    Separable,
    diagonal_sup,
    evaluate,
    is_stationary,
    kernel_to_dict,
    parse_kernel,
    stationary_counterpart,
)
from utils.matrix_oracle import EnsembleConfig, evolve_trace
from utils.ncp import brute_force_pairings, catalan, enumerate_ncp, is_crossing, series_partial_sum
from utils.spectral import (
    laplace_constant_exact,
    laplace_exponential_exact,
    laplace_of,
    lambda_c_exponential,
    lambda_c_for,
)
from utils.volterra import (
    StationarySolution,
    check_upper_bound,
    default_tilt,
    solution_to_frame,
    solve_stationary,
    solve_two_time,
)

logger = logging.getLogger("kraichnan")

Artifact = Tuple[str, Any]  # ("csv", DataFrame) or ("json", dict)


# ----------------------------
# Argument helpers
# ----------------------------

def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _kernel(args) -> KernelSpec:
    return parse_kernel(args.kernel)


def run_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Everything that determines the artifact; thread count and output location are left out."""
    skip = {"out", "verbose", "threads", "handler"}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if "kernel" in config:
        config["kernel"] = kernel_to_dict(parse_kernel(config["kernel"]))
    return config


def _solve(args) -> Tuple[KernelSpec, Any]:
    kernel = _kernel(args)
    if not is_stationary(kernel):
        raise UsageError(f"'{args.command}' needs a stationary kernel; use solve2d for {kernel.family}")
    if args.mu is None:
        args.mu = default_tilt(kernel)
    return kernel, solve_stationary(kernel, horizon=args.T, step=args.h, tilt=args.mu)


# ----------------------------
# Subcommands
# ----------------------------

def cmd_solve(args) -> Artifact:
    _, solution = _solve(args)
    return "csv", solution_to_frame(solution)


def cmd_solve2d(args) -> Artifact:
    kernel = _kernel(args)
    if args.mu is None:
        args.mu = default_tilt(kernel)
    solution = solve_two_time(kernel, t0=args.t0, horizon=args.T, step=args.h, tilt=args.mu)
    grid = solution.times
    j_idx, i_idx = np.tril_indices(grid.size)
    lags = (j_idx - i_idx) * solution.step
    H = solution.values[j_idx, i_idx] * np.exp(solution.tilt * lags)
    logger.info("upper bound excess %.3e", check_upper_bound(solution))
    return "csv", pd.DataFrame({"s": grid[j_idx], "t": grid[i_idx], "H": H})


def cmd_series(args) -> Artifact:
    kernel = _kernel(args)
    if args.n_max > NCP_DETERMINISTIC_MAX and args.seed is None:
        raise UsageError(f"--seed is required for Monte Carlo series terms (n_max > {NCP_DETERMINISTIC_MAX})")
    approx = series_partial_sum(kernel, args.t, args.s, args.n_max, samples=args.samples,
                                seed=args.seed or 0, threads=args.threads)
    logger.info("series total %.12g +- %.3g, tail bound %.3g", approx.total, approx.total_stderr, approx.tail_bound)
    return "csv", pd.DataFrame({
        "n": np.arange(approx.n_max + 1),
        "B_n": approx.terms,
        "stderr": approx.stderr,
        "method": approx.method,
    })


def cmd_lambdac(args) -> Artifact:
    kernel = _kernel(args)
    solution = None
    if not isinstance(kernel, (Constant, Exponential)):
        _, solution = _solve(args)
    return "json", lambda_c_for(kernel, solution).to_dict()


def _exact_laplace(kernel: KernelSpec, lam: float) -> float:
    try:
        if isinstance(kernel, Constant):
            return laplace_constant_exact(kernel.C, lam)
        if isinstance(kernel, Exponential):
            return laplace_exponential_exact(kernel.c, kernel.delta, lam)
    except KraichnanError:
        pass
    return math.nan


def cmd_laplace(args) -> Artifact:
    kernel, solution = _solve(args)
    rows = [{"lambda": lam, "laplace": laplace_of(solution, lam), "exact": _exact_laplace(kernel, lam)}
            for lam in sorted(args.lambda_grid)]
    return "csv", pd.DataFrame(rows, columns=["lambda", "laplace", "exact"])


def cmd_fit(args) -> Artifact:
    _, solution = _solve(args)
    window = tuple(args.window) if args.window else None
    fit = fit_exponential_power(solution, window)
    payload = fit.to_dict()
    payload["lambda_lyapunov_only"] = fit_lyapunov_only(solution, window)
    return "json", payload


def cmd_flatcheck(args) -> Artifact:
    kernel = _kernel(args)
    if not isinstance(kernel, RatioFlat):
        raise UsageError(f"flatcheck needs a ratio_flat kernel, got {kernel.family}")
    frame = flat_kernel_limit_check(kernel, args.t_values, args.gap, step=args.h)
    counterpart = stationary_counterpart(kernel)
    try:
        target = lambda_c_for(counterpart).lambda_c
    except UsageError:
        target = math.nan
    frame["target"] = target
    return "csv", frame


def cmd_mc(args) -> Artifact:
    config = EnsembleConfig(kernel=_kernel(args), N=args.N, samples=args.samples, horizon=args.T,
                            step=args.h, seed=args.seed, t0=args.t0)
    return "csv", evolve_trace(config, threads=args.threads).to_frame()


# ----------------------------
# Self-check suite
# ----------------------------

def _check(name: str, fn: Callable[[], Tuple[bool, float]]) -> Dict[str, Any]:
    try:
        passed, value = fn()
    except KraichnanError as exc:
        return {"check": name, "passed": False, "value": None, "error": str(exc)}
    return {"check": name, "passed": bool(passed), "value": float(value), "error": None}


def _validation_suite() -> List[Tuple[str, Callable[[], Tuple[bool, float]]]]:
    def catalan_counts():
        worst = max(abs(len(enumerate_ncp(n)) - catalan(n)) for n in range(7))
        return worst == 0, worst

    def brute_force():
        miss = sum(
            len(enumerate_ncp(n)) != sum(1 for p in brute_force_pairings(n) if not is_crossing(p))
            for n in range(5))
        return miss == 0, miss

    def bessel_series():
        err = max(abs(bessel_j_value(nu, z) - special.jv(nu, z))
                  for nu in (-0.5, 0.0, 1.5, 7.0) for z in (0.5, 5.0, 15.0))
        return err < 1e-7, err

    def first_zero():
        err = abs(smallest_zero(0.0) - special.jn_zeros(0, 1)[0])
        return err < 1e-10, err

    def mgf():
        err = abs(semicircle_mgf(1.0) - special.iv(1, 2.0))
        return err < 1e-13, err

    def constant_solution():
        sol = solve_stationary(Constant(1.0), horizon=1.0, step=1e-3)
        rel = max(abs(sol.value_at(t) / semicircle_mgf(t) - 1.0) for t in (0.25, 0.5, 1.0))
        return rel < 1e-4, rel

    def gauge():
        a = solve_stationary(Exponential(1.0, 1.0), horizon=2.0, step=1e-2, tilt=2.0)
        b = solve_stationary(Exponential(1.0, 1.0), horizon=2.0, step=1e-2, tilt=3.0)
        rel = float(np.max(np.abs(a.H / b.H - 1.0)))
        return rel < 1e-12, rel

    def upper_bound():
        excess = check_upper_bound(solve_stationary(Exponential(1.0, 1.0), horizon=5.0, step=1e-2))
        return excess <= 1e-3, excess

    def monotone():
        lo = solve_stationary(Constant(0.5), horizon=3.0, step=1e-2, tilt=2.0)
        hi = solve_stationary(Constant(1.0), horizon=3.0, step=1e-2, tilt=2.0)
        worst = float(np.max(lo.values / hi.values - 1.0))
        return worst <= 1e-9, worst

    def lambda_c():
        report = lambda_c_exponential(1.0, 0.5)
        return report.residual < 1e-8, report.residual

    def kernel_bounds():
        families = [
            Constant(1.0), Exponential(1.0, 0.5), MixedExponential(1.0, 1.0, 1.0), PowerLaw(1.0, 2.0),
            AlgebraicMixed(1.0, 1.0, 2.0), Separable(values=(1.0, 2.0, 0.5), step=0.5),
            RatioFlat(C=1.0, a=1.0, stationary_part=Exponential(1.0, 1.0)),
        ]
        pairs = [(0.0, 0.0), (0.7, 0.2), (1.0, 1.0), (5.0, 1.25), (12.5, 12.0)]
        bad = 0
        for kernel in families:
            sup = diagonal_sup(kernel)
            for s, t in pairs:
                value = evaluate(kernel, s, t)
                bad += not (0.0 <= value <= sup + 1e-12)
                if is_stationary(kernel):
                    bad += value != evaluate(kernel, s - t, 0.0)
        return bad == 0, bad

    def exact_fit():
        step, mu, lam, p, log_amp = 0.01, 2.5, 2.0, -1.5, 0.3
        t = step * np.arange(2001)
        with np.errstate(divide="ignore"):
            log_g = log_amp + (lam - mu) * t + p * np.log(t)
        log_g[0] = 0.0
        fit = fit_exponential_power(StationarySolution(step, 20.0, mu, np.exp(log_g), Constant(1.0)))
        err = max(abs(fit.lambda_hat - lam), abs(fit.p_hat - p), abs(fit.log_amplitude - log_amp))
        return err < 1e-6, err

    def fit_tilt():
        a = solve_stationary(Exponential(1.0, 1.0), horizon=20.0, step=1e-2, tilt=2.0)
        b = solve_stationary(Exponential(1.0, 1.0), horizon=20.0, step=1e-2, tilt=3.0)
        gap = abs(fit_exponential_power(a).lambda_hat - fit_exponential_power(b).lambda_hat)
        return gap < 1e-10, gap

    def zero_kernel_trace():
        config = EnsembleConfig(Constant(0.0), N=4, samples=2, horizon=0.5, step=0.1, seed=0)
        err = float(np.max(np.abs(evolve_trace(config, threads=1).mean - 1.0)))
        return err < 1e-12, err

    return [
        ("ncp.catalan_counts", catalan_counts),
        ("ncp.brute_force", brute_force),
        ("bessel.series_vs_scipy", bessel_series),
        ("bessel.first_zero", first_zero),
        ("bessel.semicircle_mgf", mgf),
        ("volterra.constant_closed_form", constant_solution),
        ("volterra.gauge_invariance", gauge),
        ("volterra.upper_bound", upper_bound),
        ("volterra.monotonicity", monotone),
        ("spectral.lambda_c_residual", lambda_c),
        ("kernels.bounds_and_stationarity", kernel_bounds),
        ("asymptotics.exact_recovery", exact_fit),
        ("asymptotics.tilt_invariance", fit_tilt),
        ("matrix_oracle.zero_kernel_identity", zero_kernel_trace),
    ]


def cmd_validate(args) -> Artifact:
    rows = [_check(name, fn) for name, fn in _validation_suite()]
    for row in rows:
        logger.info("%-32s %s", row["check"], "ok" if row["passed"] else "FAILED")
    return "json", {"checks": rows, "passed": all(r["passed"] for r in rows)}


# ----------------------------
# Parser
# ----------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_TITLE, description="Numerical laboratory for the Kraichnan equation.")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: KRAICHNAN_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str, kernel: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        if kernel:
            p.add_argument("--kernel", required=True, help="kernel JSON, e.g. '{\"family\":\"constant\",\"C\":1}'")
        p.add_argument("--out", type=Path, default=None, help="artifact path (stdout if omitted)")
        return p

    def grid(p: argparse.ArgumentParser, T: float = DEFAULTS["T"], h: float = DEFAULTS["h"]) -> None:
        p.add_argument("--T", type=float, default=T, help="horizon")
        p.add_argument("--h", type=float, default=h, help="step")
        p.add_argument("--mu", type=float, default=None, help="tilt (default 2 sqrt(sup k))")

    grid(command("solve", cmd_solve, "stationary solution H(t) as CSV"))

    p = command("solve2d", cmd_solve2d, "two-time solution H(s,t) as CSV")
    grid(p, T=5.0)
    p.add_argument("--t0", type=float, default=0.0)

    p = command("series", cmd_series, "non-crossing pairing series partial sum")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--n-max", dest="n_max", type=int, default=DEFAULTS["n_max"])
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=None)

    grid(command("lambdac", cmd_lambdac, "Lyapunov exponent lambda_c as JSON"))

    p = command("laplace", cmd_laplace, "Laplace transform on a lambda grid as CSV")
    grid(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list, required=True)

    p = command("fit", cmd_fit, "fit H ~ A exp(lambda t) t^p")
    grid(p)
    p.add_argument("--window", type=float, nargs=2, default=None, metavar=("LO", "HI"))

    p = command("flatcheck", cmd_flatcheck, "growth rate of H(t+x, t) for increasing t")
    p.add_argument("--t-values", dest="t_values", type=_float_list, default=[20.0, 80.0, 320.0])
    p.add_argument("--gap", type=float, default=DEFAULTS["gap"])
    p.add_argument("--h", type=float, default=0.05)

    p = command("mc", cmd_mc, "random-matrix trace estimate as CSV")
    p.add_argument("--N", type=int, default=DEFAULTS["N"])
    p.add_argument("--samples", type=int, default=DEFAULTS["S"])
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)

    command("validate", cmd_validate, "run the built-in invariant checks", kernel=False)
    return parser


def _emit(kind: str, body: Any, config: Dict[str, Any], out: Optional[Path], command: str) -> None:
    if out is None and output_dir():
        out = Path(output_dir()) / f"{command}.{kind}"
    if kind == "csv":
        text = artifacts.write_csv(body, config, out)
    else:
        text = artifacts.write_json(body, config, out)
    if out is None:
        sys.stdout.write(text)
    else:
        logger.info("wrote %s", out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=log_level(args.verbose), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        kind, body = args.handler(args)
        config = run_config(args)
        _emit(kind, body, config, args.out, args.command)
    except KraichnanError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    if args.command == "validate" and not body["passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
