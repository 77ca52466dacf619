"""
Time-domain solver for the Kraichnan equation.

- `solve_stationary` integrates G(t) = exp(-mu t) H(t) for a stationary kernel,
  G'(t) = -mu G(t) + int_0^t G(t-u) G(u) k(t-u) du, G(0) = 1.
- `solve_two_time` marches H(s, t) in s for every grid t on the lower triangle.
- Both use a uniform grid, trapezoidal memory integrals (math.fsum, ascending index), one explicit
  rectangle predictor and one trapezoid corrector per node. The tilt enters only through the factor
  exp(-mu h) per step, so solutions for different mu agree exactly up to rounding.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from config import STATIONARY_MAX_NODES, TWO_TIME_MAX_NODES, UNDERFLOW_FLOOR
from utils.bessel import semicircle_mgf
from utils.errors import DomainError, ResourceError, TiltTooLargeError, TiltTooSmallError, UsageError
from utils.kernels import KernelSpec, Separable, diagonal_sup, evaluate_array, is_stationary

logger = logging.getLogger(__name__)


def default_tilt(kernel: KernelSpec) -> float:
    """mu = 2 sqrt(sup k(u,u)), the universal growth rate bound."""
    return 2.0 * math.sqrt(diagonal_sup(kernel))


def _node_count(span: float, step: float, cap: int, label: str) -> int:
    n = int(math.floor(span / step + 1e-9))
    if n > cap:
        raise ResourceError(f"{label} needs {n} steps, above the cap of {cap}; increase h or shorten T")
    return n


def _fsum_dot(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    if not a.size:
        return 0.0
    try:
        return math.fsum(a * b * c)
    except OverflowError:
        return math.inf


@dataclass(frozen=True, eq=False)
class StationarySolution:
    step: float
    horizon: float
    tilt: float
    values: np.ndarray
    kernel: KernelSpec
    # per-solution results derived later (the fitted tail model)
    memo: Dict[str, Any] = field(default_factory=dict, init=False, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    @property
    def H(self) -> np.ndarray:
        """H(t) = G(t) exp(mu t), +inf where it overflows."""
        with np.errstate(over="ignore"):
            return self.values * np.exp(self.tilt * self.times)

    def log_H(self) -> np.ndarray:
        return np.log(self.values) + self.tilt * self.times

    def value_at(self, t: float) -> float:
        """H at a grid time (nearest node)."""
        idx = int(round(t / self.step))
        if idx < 0 or idx >= self.values.size:
            raise DomainError(f"t={t} lies outside the solution grid [0, {self.times[-1]}]")
        return float(self.values[idx] * math.exp(self.tilt * idx * self.step))


@dataclass(frozen=True, eq=False)
class TwoTimeSolution:
    t0: float
    step: float
    horizon: float
    tilt: float
    values: np.ndarray  # values[j, i] = G at s = t0 + j h, t = t0 + i h; NaN above the diagonal
    kernel: KernelSpec

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.values.shape[0])

    def H(self, j: int, i: int) -> float:
        return float(self.values[j, i] * math.exp(self.tilt * (j - i) * self.step))

    def column(self, i: int) -> StationarySolution:
        """H(t_i + x, t_i) as a function of the lag x, packaged for the fitting routines."""
        return StationarySolution(
            step=self.step,
            horizon=self.horizon - self.times[i],
            tilt=self.tilt,
            values=_frozen(self.values[i:, i].copy()),
            kernel=self.kernel,
        )


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _overflow(mu: float, kernel: KernelSpec, t: float, last: float) -> TiltTooSmallError:
    growth = math.log(last) / t if last > 0 and t > 0 else 0.0
    suggested = max(default_tilt(kernel), mu + growth)
    return TiltTooSmallError(f"tilted solution overflowed at t={t:g} with mu={mu:g}", suggested)


def _underflow(mu: float, t: float, value: float) -> TiltTooLargeError:
    growth = math.log(value) / t if value > 0 and t > 0 else -mu
    suggested = max(0.0, mu + growth)
    return TiltTooLargeError(f"tilted solution fell to {value:.3e} at t={t:g} with mu={mu:g}", suggested)


# ----------------------------
# Stationary kernels
# ----------------------------

def solve_stationary(kernel: KernelSpec, horizon: float, step: float,
                     tilt: Optional[float] = None) -> StationarySolution:
    if not is_stationary(kernel):
        raise UsageError(f"solve_stationary needs a stationary kernel, got {kernel.family}")
    if step <= 0 or horizon <= 0:
        raise DomainError(f"need step > 0 and horizon > 0, got h={step}, T={horizon}")
    mu = default_tilt(kernel) if tilt is None else float(tilt)
    if mu < 0:
        raise DomainError(f"tilt must be nonnegative, got mu={mu}")
    if step > horizon:
        return StationarySolution(step, horizon, mu, _frozen(np.ones(1)), kernel)

    started = time.perf_counter()
    n = _node_count(horizon, step, STATIONARY_MAX_NODES, "solve_stationary")
    h = step
    k = np.asarray(kernel.profile(h * np.arange(n + 1)), dtype=float)
    decay = math.exp(-mu * h)
    G = np.zeros(n + 1)
    phi = np.zeros(n + 1)
    G[0] = 1.0

    G[1] = decay * (1.0 + 0.5 * k[0] * h * h)
    phi[1] = 0.5 * h * (k[1] + k[0]) * G[1]
    for i in range(2, n + 1):
        interior = h * _fsum_dot(G[i - 1:0:-1], G[1:i], k[i - 1:0:-1])
        edge = 0.5 * h * (k[i] + k[0])
        predicted = decay * (G[i - 1] + h * phi[i - 1])
        corrected = decay * (G[i - 1] + 0.5 * h * phi[i - 1]) + 0.5 * h * (interior + edge * predicted)
        if not math.isfinite(corrected):
            raise _overflow(mu, kernel, i * h, G[i - 1])
        if corrected < UNDERFLOW_FLOOR:
            raise _underflow(mu, i * h, corrected)
        G[i] = corrected
        phi[i] = interior + edge * corrected

    logger.info("solve_stationary %s: n=%d h=%g mu=%g in %.2fs", kernel.family, n, h, mu,
                time.perf_counter() - started)
    return StationarySolution(step, horizon, mu, _frozen(G), kernel)


# ----------------------------
# General two-time kernels
# ----------------------------

def solve_two_time(kernel: KernelSpec, t0: float, horizon: float, step: float,
                   tilt: Optional[float] = None) -> TwoTimeSolution:
    if t0 < 0 or horizon <= t0:
        raise DomainError(f"need T > t0 >= 0, got t0={t0}, T={horizon}")
    if step <= 0:
        raise DomainError(f"need step > 0, got h={step}")
    mu = default_tilt(kernel) if tilt is None else float(tilt)
    if mu < 0:
        raise DomainError(f"tilt must be nonnegative, got mu={mu}")
    if step > horizon - t0:
        return TwoTimeSolution(t0, step, horizon, mu, _frozen(np.ones((1, 1))), kernel)

    started = time.perf_counter()
    n = _node_count(horizon - t0, step, TWO_TIME_MAX_NODES, "solve_two_time")
    h = step
    grid = t0 + h * np.arange(n + 1)
    s_mesh, t_mesh = np.meshgrid(grid, grid, indexing="ij")
    K = evaluate_array(kernel, s_mesh, t_mesh)
    decay = math.exp(-mu * h)

    G = np.full((n + 1, n + 1), np.nan)
    phi = np.zeros((n + 1, n + 1))
    np.fill_diagonal(G, 1.0)

    for j in range(1, n + 1):
        # descending i: H(s_j, u_m) for m > i is already known on this row
        i = j - 1
        G[j, i] = decay * (1.0 + 0.5 * K[i, i] * h * h)
        phi[j, i] = 0.5 * h * (K[j, i] + K[j, j]) * G[j, i]
        for i in range(j - 2, -1, -1):
            interior = h * _fsum_dot(G[j, i + 1:j], G[i + 1:j, i], K[j, i + 1:j])
            edge = 0.5 * h * (K[j, i] + K[j, j])
            predicted = decay * (G[j - 1, i] + h * phi[j - 1, i])
            corrected = decay * (G[j - 1, i] + 0.5 * h * phi[j - 1, i]) + 0.5 * h * (interior + edge * predicted)
            if not math.isfinite(corrected):
                raise _overflow(mu, kernel, (j - i) * h, G[j - 1, i])
            if corrected < UNDERFLOW_FLOOR:
                raise _underflow(mu, (j - i) * h, corrected)
            G[j, i] = corrected
            phi[j, i] = interior + edge * corrected

    logger.info("solve_two_time %s: t0=%g n=%d h=%g mu=%g in %.2fs", kernel.family, t0, n, h, mu,
                time.perf_counter() - started)
    return TwoTimeSolution(t0, step, horizon, mu, _frozen(G), kernel)


# ----------------------------
# Checks and closed forms
# ----------------------------

def _sqrt_diag_integral(kernel: KernelSpec, grid: np.ndarray) -> np.ndarray:
    root = np.sqrt(evaluate_array(kernel, grid, grid))
    return cumulative_trapezoid(root, grid, initial=0.0) if grid.size > 1 else np.zeros(1)


def upper_bound_excess(solution) -> np.ndarray:
    """H / exp(2 int sqrt(k(u,u)) du) - 1 at every grid point (lower triangle for two-time solutions)."""
    if isinstance(solution, StationarySolution):
        t = solution.times
        root_k0 = math.sqrt(float(evaluate_array(solution.kernel, 0.0, 0.0)))
        log_ratio = solution.log_H() - 2.0 * root_k0 * t
        return np.expm1(log_ratio)
    grid = solution.times
    cum = _sqrt_diag_integral(solution.kernel, grid)
    n = grid.size
    j_idx, i_idx = np.tril_indices(n)
    lags = (j_idx - i_idx) * solution.step
    log_ratio = np.log(solution.values[j_idx, i_idx]) + solution.tilt * lags - 2.0 * (cum[j_idx] - cum[i_idx])
    return np.expm1(log_ratio)


def check_upper_bound(solution) -> float:
    """Largest relative excess of H over exp(2 int_t^s sqrt(k(u,u)) du); <= 0 up to discretization."""
    return float(np.max(upper_bound_excess(solution)))


def decoupled_solution(kernel: Separable, s: float, t: float) -> float:
    """Closed form for k(s,t) = h(s)h(t): the semicircle mgf at int_t^s h."""
    return semicircle_mgf(kernel.h_integral(t, s))


def solution_to_frame(solution: StationarySolution) -> pd.DataFrame:
    return pd.DataFrame({"t": solution.times, "G": solution.values, "H": solution.H})
