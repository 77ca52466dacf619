# utils/matrix_oracle.py
"""
Random-matrix check of the time-domain solutions.

- Entries L_pq(t), p <= q, of an N x N symmetric matrix process are independent Gaussian paths with
  time covariance k(t_i, t_j)/N on the grid (Cholesky of the grid covariance), mirrored below the diagonal.
- X solves dX/ds = L(s) X, X(t0) = I (classical RK4, L linearly interpolated at interval midpoints).
- (1/N) tr X(s) averaged over samples estimates H(s, t0) as N grows.

Every sample draws from its own Philox stream spawned from the base seed, so the estimate does not
depend on the number of threads.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from config import PSD_JITTER
from utils.errors import DomainError, KernelNotPSDError, StepSizeError
from utils.kernels import KernelSpec, evaluate_array, kernel_to_dict
from utils.parallel import run_blocks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleConfig:
    kernel: KernelSpec
    N: int
    samples: int
    horizon: float
    step: float
    seed: int
    t0: float = 0.0

    def __post_init__(self):
        if self.N < 2:
            raise DomainError(f"matrix dimension must be >= 2, got N={self.N}")
        if self.samples < 1:
            raise DomainError(f"sample count must be >= 1, got S={self.samples}")
        if self.step <= 0 or self.t0 < 0 or self.horizon <= self.t0:
            raise DomainError(f"need h > 0 and T > t0 >= 0, got h={self.step}, t0={self.t0}, T={self.horizon}")
        span = self.horizon - self.t0
        n = round(span / self.step)
        if n < 1 or abs(n * self.step - span) > 1e-9 * max(span, 1.0):
            raise DomainError(f"step h={self.step} must divide T - t0 = {span}")

    @property
    def n_steps(self) -> int:
        return int(round((self.horizon - self.t0) / self.step))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n_steps + 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": kernel_to_dict(self.kernel),
            "N": self.N,
            "S": self.samples,
            "t0": self.t0,
            "T": self.horizon,
            "h": self.step,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TraceEstimate:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    config: Dict[str, Any]

    def value_at(self, s: float) -> float:
        idx = int(np.argmin(np.abs(self.times - s)))
        return float(self.mean[idx])

    def stderr_at(self, s: float) -> float:
        idx = int(np.argmin(np.abs(self.times - s)))
        return float(self.stderr[idx])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"s": self.times, "mean": self.mean, "trace_stderr": self.stderr})


# ----------------------------
# Sampling
# ----------------------------

def time_factor(config: EnsembleConfig) -> np.ndarray:
    """Lower Cholesky factor of the grid covariance k(t_i, t_j) + eps I; all zeros for the zero kernel."""
    grid = config.times
    s_mesh, t_mesh = np.meshgrid(grid, grid, indexing="ij")
    K = evaluate_array(config.kernel, s_mesh, t_mesh)
    top = float(np.max(np.diag(K)))
    if top == 0.0:
        return np.zeros_like(K)
    try:
        factor = np.linalg.cholesky(K + PSD_JITTER * top * np.eye(grid.size))
    except np.linalg.LinAlgError as exc:
        raise KernelNotPSDError(
            f"grid covariance of the {config.kernel.family} kernel is not positive semidefinite") from exc
    factor.setflags(write=False)
    return factor


def _sample_rng(config: EnsembleConfig, index: int) -> np.random.Generator:
    child = np.random.SeedSequence(config.seed).spawn(index + 1)[index]
    return np.random.Generator(np.random.Philox(child))


def sample_process(config: EnsembleConfig, index: int = 0, factor: Optional[np.ndarray] = None) -> np.ndarray:
    """One realization of L on the grid, shape (n+1, N, N), every slice symmetric."""
    if factor is None:
        factor = time_factor(config)
    N = config.N
    upper = np.triu_indices(N)
    rng = _sample_rng(config, index)
    noise = rng.standard_normal((factor.shape[0], upper[0].size))
    paths = factor @ noise / math.sqrt(N)
    L = np.zeros((factor.shape[0], N, N))
    L[:, upper[0], upper[1]] = paths
    L[:, upper[1], upper[0]] = paths
    return L


# ----------------------------
# Evolution
# ----------------------------

def _check_step(L: np.ndarray, h: float) -> None:
    norms = np.linalg.norm(L, axis=(1, 2))
    worst = L[int(np.argmax(norms))]
    spectral = float(np.max(np.abs(np.linalg.eigvalsh(worst)))) if norms.size else 0.0
    if h * spectral > 1.0:
        raise StepSizeError(f"h ||L|| = {h * spectral:.3f} > 1; reduce the step h={h}")


def _trace_path(config: EnsembleConfig, index: int, factor: np.ndarray) -> np.ndarray:
    L = sample_process(config, index, factor)
    h = config.step
    _check_step(L, h)
    N = config.N
    X = np.eye(N)
    out = np.empty(L.shape[0])
    out[0] = 1.0
    for i in range(L.shape[0] - 1):
        left, right = L[i], L[i + 1]
        mid = 0.5 * (left + right)
        k1 = left @ X
        k2 = mid @ (X + 0.5 * h * k1)
        k3 = mid @ (X + 0.5 * h * k2)
        k4 = right @ (X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = np.trace(X) / N
    return out


def evolve_trace(config: EnsembleConfig, threads: Optional[int] = None) -> TraceEstimate:
    started = time.perf_counter()
    factor = time_factor(config)
    traces = np.vstack(run_blocks(lambda i: _trace_path(config, i, factor), config.samples, threads))
    mean = traces.mean(axis=0)
    if config.samples > 1:
        stderr = traces.std(axis=0, ddof=1) / math.sqrt(config.samples)
    else:
        stderr = np.zeros_like(mean)
    mean[0] = 1.0
    logger.info("evolve_trace %s: N=%d S=%d seed=%d in %.2fs", config.kernel.family, config.N,
                config.samples, config.seed, time.perf_counter() - started)
    return TraceEstimate(times=config.times, mean=mean, stderr=stderr, config=config.to_dict())


def second_moment(config: EnsembleConfig) -> pd.DataFrame:
    """Sample mean and standard error of (1/N) tr L(t)^2 at every grid time; its target is k(t, t)."""
    factor = time_factor(config)
    values = np.vstack([
        np.einsum("ipq,ipq->i", L, L) / config.N
        for L in (sample_process(config, i, factor) for i in range(config.samples))
    ])
    stderr = values.std(axis=0, ddof=1) / math.sqrt(config.samples) if config.samples > 1 else 0.0 * values[0]
    grid = config.times
    return pd.DataFrame({
        "t": grid,
        "mean": values.mean(axis=0),
        "stderr": stderr,
        "k_diag": evaluate_array(config.kernel, grid, grid),
    })


def finite_size_scan(config: EnsembleConfig, sizes: Iterable[int], reference: float,
                     threads: Optional[int] = None) -> pd.DataFrame:
    """|estimate(T) - reference| for several matrix sizes at fixed samples, horizon and seed."""
    rows = []
    for N in sizes:
        cfg = EnsembleConfig(config.kernel, int(N), config.samples, config.horizon, config.step,
                             config.seed, config.t0)
        est = evolve_trace(cfg, threads)
        value = float(est.mean[-1])
        rows.append({"N": int(N), "estimate": value, "stderr": float(est.stderr[-1]),
                     "error": abs(value - reference)})
    return pd.DataFrame(rows, columns=["N", "estimate", "stderr", "error"])
