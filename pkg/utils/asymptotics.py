# utils/asymptotics.py
"""
Exponent/power fits of time-domain solutions, H(t) ~ A exp(lambda t) t^p.

All fits work on log H = log G + mu t, so they never see the tilt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.integrate import simpson

from config import FIT_MIN_POINTS, JACKKNIFE_BLOCKS
from utils.errors import DomainError, UsageError
from utils.kernels import RatioFlat
from utils.volterra import StationarySolution, solve_two_time

logger = logging.getLogger(__name__)

Window = Tuple[float, float]


@dataclass(frozen=True)
class AsymptoticsFit:
    window: Window
    lambda_hat: float
    p_hat: float
    log_amplitude: float
    rms: float
    spread: Dict[str, float] = field(default_factory=dict)
    n_points: int = 0

    @property
    def amplitude(self) -> float:
        return math.exp(self.log_amplitude)

    def to_dict(self) -> Dict[str, object]:
        return {
            "lambda_hat": self.lambda_hat,
            "p_hat": self.p_hat,
            "lnA_hat": self.log_amplitude,
            "rms": self.rms,
            "spread": dict(self.spread),
            "window": list(self.window),
            "n_points": self.n_points,
        }


def default_window(solution: StationarySolution) -> Window:
    end = float(solution.times[-1])
    return 0.5 * end, end


def _select(t: np.ndarray, log_h: np.ndarray, window: Window) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = window
    if not (0 < lo < hi):
        raise DomainError(f"fit window must satisfy 0 < lo < hi, got {window}")
    mask = (t >= lo - 1e-12) & (t <= hi + 1e-12) & (t > 0)
    if int(mask.sum()) < FIT_MIN_POINTS:
        raise DomainError(f"fit window {window} holds {int(mask.sum())} grid points; at least {FIT_MIN_POINTS} needed")
    return t[mask], log_h[mask]


def _design(t: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(t), t, np.log(t)])


def _ols(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(_design(t), y, rcond=None)
    return coef


def _jackknife(t: np.ndarray, y: np.ndarray, blocks: int) -> Dict[str, float]:
    chunks = np.array_split(np.arange(t.size), blocks)
    estimates = []
    for leave in range(blocks):
        keep = np.concatenate([c for b, c in enumerate(chunks) if b != leave])
        estimates.append(_ols(t[keep], y[keep]))
    est = np.asarray(estimates)
    scale = math.sqrt((blocks - 1) / blocks)
    dev = scale * np.sqrt(np.sum((est - est.mean(axis=0)) ** 2, axis=0))
    return {"lnA_hat": float(dev[0]), "lambda_hat": float(dev[1]), "p_hat": float(dev[2])}


def fit_series(t: np.ndarray, log_h: np.ndarray, window: Window) -> AsymptoticsFit:
    """Least squares of log H against {1, t, ln t} on the window, with a jackknife spread."""
    tw, yw = _select(np.asarray(t, dtype=float), np.asarray(log_h, dtype=float), window)
    coef = _ols(tw, yw)
    resid = yw - _design(tw) @ coef
    fit = AsymptoticsFit(
        window=(float(window[0]), float(window[1])),
        lambda_hat=float(coef[1]),
        p_hat=float(coef[2]),
        log_amplitude=float(coef[0]),
        rms=float(np.sqrt(np.mean(resid ** 2))),
        spread=_jackknife(tw, yw, JACKKNIFE_BLOCKS),
        n_points=int(tw.size),
    )
    logger.debug("fit on %s: lambda=%.6f p=%.4f lnA=%.4f rms=%.2e", window, fit.lambda_hat, fit.p_hat,
                 fit.log_amplitude, fit.rms)
    return fit


def fit_exponential_power(solution: StationarySolution, window: Optional[Window] = None) -> AsymptoticsFit:
    window = window or default_window(solution)
    return fit_series(solution.times, solution.log_H(), window)


def fit_lyapunov_only(solution: StationarySolution, window: Optional[Window] = None) -> float:
    """Growth rate alone: soft-L1 robust regression, the power correction kept as a nuisance term."""
    window = window or default_window(solution)
    tw, yw = _select(solution.times, solution.log_H(), window)
    start = _ols(tw, yw)
    design = _design(tw)
    resid0 = yw - design @ start
    scale = max(float(np.median(np.abs(resid0))), 1e-12)
    result = optimize.least_squares(lambda c: design @ c - yw, start, loss="soft_l1", f_scale=scale,
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(result.x[1])


def tauberian_average(solution: StationarySolution, lambda_c: float, x: Optional[float] = None) -> float:
    """(1/x) int_0^x exp(-lambda_c u) H(u) du; its limit is 1/A when H ~ exp(lambda_c t)/A'."""
    t = solution.times
    x = float(t[-1]) if x is None else x
    if x <= 0 or x > t[-1] + 1e-12:
        raise DomainError(f"averaging horizon must lie in (0, {t[-1]}], got {x}")
    mask = t <= x + 1e-12
    integrand = np.exp(np.log(solution.values[mask]) + (solution.tilt - lambda_c) * t[mask])
    return float(simpson(integrand, x=t[mask]) / x)


def flat_kernel_limit_check(kernel: RatioFlat, t_values: Iterable[float], gap: float,
                            step: float = 0.05) -> pd.DataFrame:
    """Growth rate of H(t + x, t) in the lag x over [gap/2, gap], for each starting time t."""
    if not isinstance(kernel, RatioFlat):
        raise UsageError(f"flat_kernel_limit_check needs a ratio_flat kernel, got {kernel.family}")
    rows = []
    for t in t_values:
        solution = solve_two_time(kernel, t0=float(t), horizon=float(t) + gap, step=step)
        fit = fit_exponential_power(solution.column(0), (0.5 * gap, gap))
        rows.append({"t": float(t), "slope": fit.lambda_hat, "p_hat": fit.p_hat, "rms": fit.rms})
        logger.info("flat limit t=%g: slope=%.5f", t, fit.lambda_hat)
    return pd.DataFrame(rows, columns=["t", "slope", "p_hat", "rms"])
