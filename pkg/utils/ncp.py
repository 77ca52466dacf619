"""
Non-crossing pair partitions and the combinatorial series for H.

- `enumerate_ncp` builds pairings recursively: position 1 is matched with an even-offset partner,
  which splits the rest into an inside block and an outside block. Only non-crossing pairings are
  ever produced.
- `series_term` integrates the Wick moment over the ordered simplex t <= t_1 <= ... <= t_2n <= s:
  iterated trapezoid for n <= 2, seeded Monte Carlo above.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from config import (
    CATALAN_OVERFLOW_N,
    MC_BLOCK_SIZE,
    MC_DEFAULT_SAMPLES,
    NCP_DETERMINISTIC_MAX,
    NCP_ENUM_CAP,
    NCP_INTEGRATION_CAP,
    SERIES_GRID_POINTS,
)
from utils.errors import DomainError, ResourceError
from utils.kernels import KernelSpec, diagonal_sup, evaluate_array
from utils.parallel import run_blocks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pairing:
    """Fixed-point-free involution of {1..2n}; `sigma[i-1]` is the partner of i."""

    sigma: Tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.sigma) // 2

    def pairs(self) -> List[Tuple[int, int]]:
        """Pairs (i, sigma(i)) with i < sigma(i), i.e. i ranges over cr(sigma)."""
        return [(i, j) for i, j in enumerate(self.sigma, start=1) if i < j]

    def is_involution(self) -> bool:
        n2 = len(self.sigma)
        return all(1 <= j <= n2 and j != i and self.sigma[j - 1] == i for i, j in enumerate(self.sigma, start=1))


def is_crossing(pairing: Pairing) -> bool:
    """True if some i < j < sigma(i) < sigma(j)."""
    pairs = pairing.pairs()
    for (i, si), (j, sj) in itertools.combinations(pairs, 2):
        if i < j < si < sj or j < i < sj < si:
            return True
    return False


@dataclass
class SeriesApprox:
    n_max: int
    terms: List[float]
    stderr: List[float]
    total: float
    tail_bound: float
    method: List[str]
    samples: int = 0
    seed: Optional[int] = None
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def total_stderr(self) -> float:
        return math.sqrt(sum(e * e for e in self.stderr))


# ----------------------------
# Combinatorics
# ----------------------------

def catalan(n: int) -> int:
    """(2n)! / (n! (n+1)!) exactly; refuses orders whose value leaves the signed 64-bit range."""
    if n < 0:
        raise DomainError(f"catalan needs n >= 0, got n={n}")
    if n >= CATALAN_OVERFLOW_N:
        raise ResourceError(f"catalan({n}) overflows a signed 64-bit integer (cap n < {CATALAN_OVERFLOW_N})")
    return math.comb(2 * n, n) // (n + 1)


def _ncp_on(positions: Tuple[int, ...]) -> List[List[Tuple[int, int]]]:
    if not positions:
        return [[]]
    first = positions[0]
    out = []
    for k in range(1, len(positions), 2):
        partner = positions[k]
        for inside in _ncp_on(positions[1:k]):
            for outside in _ncp_on(positions[k + 1:]):
                out.append([(first, partner)] + inside + outside)
    return out


@lru_cache(maxsize=None)
def _enumerate_cached(n: int) -> Tuple[Pairing, ...]:
    result = []
    for pairs in _ncp_on(tuple(range(1, 2 * n + 1))):
        sigma = [0] * (2 * n)
        for i, j in pairs:
            sigma[i - 1] = j
            sigma[j - 1] = i
        result.append(Pairing(tuple(sigma)))
    result.sort(key=lambda p: p.sigma)
    return tuple(result)


def enumerate_ncp(n: int) -> List[Pairing]:
    if n < 0:
        raise DomainError(f"pairing order must be >= 0, got n={n}")
    if n > NCP_ENUM_CAP:
        raise ResourceError(f"enumerate_ncp is capped at n <= {NCP_ENUM_CAP}, got n={n}")
    return list(_enumerate_cached(n))


def brute_force_pairings(n: int) -> List[Pairing]:
    """Every fixed-point-free involution of {1..2n} (n <= 4), crossings included."""
    if n > 4:
        raise ResourceError(f"brute_force_pairings is capped at n <= 4, got n={n}")

    def build(remaining: Tuple[int, ...]):
        if not remaining:
            yield []
            return
        first = remaining[0]
        for k in range(1, len(remaining)):
            rest = remaining[1:k] + remaining[k + 1:]
            for tail in build(rest):
                yield [(first, remaining[k])] + tail

    out = []
    for pairs in build(tuple(range(1, 2 * n + 1))):
        sigma = [0] * (2 * n)
        for i, j in pairs:
            sigma[i - 1] = j
            sigma[j - 1] = i
        out.append(Pairing(tuple(sigma)))
    out.sort(key=lambda p: p.sigma)
    return out


# ----------------------------
# Wick formula
# ----------------------------

def _wick_batch(kernel: KernelSpec, times: np.ndarray) -> np.ndarray:
    """Wick moment for each row of `times` (shape (m, 2n), rows sorted ascending)."""
    n = times.shape[1] // 2
    total = np.zeros(times.shape[0])
    for pairing in enumerate_ncp(n):
        prod = np.ones(times.shape[0])
        for i, j in pairing.pairs():
            prod *= evaluate_array(kernel, times[:, i - 1], times[:, j - 1])
        total += prod
    return total


def wick_moment(times: Sequence[float], kernel: KernelSpec) -> float:
    """Sum over non-crossing pairings of prod_{i < sigma(i)} k(t_i, t_sigma(i)); odd moments are 0."""
    arr = np.asarray(times, dtype=float)
    if arr.size % 2 == 1:
        return 0.0
    if arr.size == 0:
        return 1.0
    if np.any(np.diff(arr) < 0):
        raise DomainError("wick_moment needs times sorted ascending")
    return float(_wick_batch(kernel, arr.reshape(1, -1))[0])


# ----------------------------
# Simplex integrals
# ----------------------------

def _triangle_integral(values: np.ndarray, dx: float) -> float:
    """Iterated trapezoid of F[x, y] over grid points x <= y."""
    m = values.shape[0]
    inner = np.zeros(m)
    for y in range(1, m):
        inner[y] = trapezoid(values[: y + 1, y], dx=dx)
    return float(trapezoid(inner, dx=dx))


def _pair_block_table(kmat: np.ndarray, dx: float) -> np.ndarray:
    """D[a, b] = integral over a <= x <= y <= b of k(x, y), for grid indices a <= b."""
    m = kmat.shape[0]
    table = np.zeros((m, m))
    for a in range(m - 1):
        inner = np.zeros(m - a)
        for idx, y in enumerate(range(a + 1, m), start=1):
            inner[idx] = trapezoid(kmat[a: y + 1, y], dx=dx)
        table[a, a:] = cumulative_trapezoid(inner, dx=dx, initial=0.0)
    return table


def _deterministic_term(kernel: KernelSpec, t: float, s: float, n: int, points: int) -> float:
    """Richardson-extrapolated iterated trapezoid (grids of `points` and 2*points-1 nodes)."""
    coarse = _trapezoid_term(kernel, t, s, n, points)
    fine = _trapezoid_term(kernel, t, s, n, 2 * points - 1)
    return (4.0 * fine - coarse) / 3.0


def _trapezoid_term(kernel: KernelSpec, t: float, s: float, n: int, points: int) -> float:
    grid = np.linspace(t, s, points)
    dx = grid[1] - grid[0]
    x, y = np.meshgrid(grid, grid, indexing="ij")
    kmat = evaluate_array(kernel, x, y)
    if n == 1:
        return _triangle_integral(kmat, dx)
    # n == 2: pairings {(1,2),(3,4)} and {(1,4),(2,3)}
    blocks = _pair_block_table(kmat, dx)
    before = blocks[0, :]
    nested = kmat * blocks
    sequential = kmat * before[:, None]
    return _triangle_integral(sequential, dx) + _triangle_integral(nested, dx)


def _mc_block(kernel: KernelSpec, t: float, s: float, n: int, size: int, seed_seq: np.random.SeedSequence):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    times = np.sort(rng.uniform(t, s, size=(size, 2 * n)), axis=1)
    values = _wick_batch(kernel, times)
    return float(values.sum()), float(np.square(values).sum()), size


def _monte_carlo_term(kernel: KernelSpec, t: float, s: float, n: int, samples: int, seed: int,
                      threads: Optional[int] = None) -> Tuple[float, float]:
    volume = (s - t) ** (2 * n) / math.factorial(2 * n)
    n_blocks = max(1, math.ceil(samples / MC_BLOCK_SIZE))
    sizes = [MC_BLOCK_SIZE] * (n_blocks - 1) + [samples - MC_BLOCK_SIZE * (n_blocks - 1)]
    children = np.random.SeedSequence([seed, n]).spawn(n_blocks)
    results = run_blocks(
        lambda idx: _mc_block(kernel, t, s, n, sizes[idx], children[idx]),
        n_blocks,
        threads=threads,
    )
    total = math.fsum(r[0] for r in results)
    total_sq = math.fsum(r[1] for r in results)
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = math.sqrt(var / max(samples - 1, 1)) if samples > 1 else 0.0
    return volume * mean, volume * stderr


def series_term(kernel: KernelSpec, t: float, s: float, n: int, samples: int = MC_DEFAULT_SAMPLES,
                seed: int = 0, points: int = SERIES_GRID_POINTS,
                threads: Optional[int] = None) -> Tuple[float, float, str]:
    """B_n(s,t) as (value, standard error, method)."""
    if s < t:
        raise DomainError(f"series_term needs s >= t, got s={s}, t={t}")
    if n < 0:
        raise DomainError(f"series order must be >= 0, got n={n}")
    if n > NCP_INTEGRATION_CAP:
        raise ResourceError(f"series_term is capped at n <= {NCP_INTEGRATION_CAP}, got n={n}")
    if n == 0:
        return 1.0, 0.0, "exact"
    if s == t:
        return 0.0, 0.0, "exact"
    if n <= NCP_DETERMINISTIC_MAX:
        return _deterministic_term(kernel, t, s, n, points), 0.0, "trapezoid"
    value, err = _monte_carlo_term(kernel, t, s, n, samples, seed, threads)
    return value, err, "monte_carlo"


def tail_bound(kernel: KernelSpec, t: float, s: float, n_max: int) -> float:
    """sum_{n > n_max} (2 sqrt(C) (s-t))^(2n) / (2n)!, with C = sup k(u,u)."""
    y = 2.0 * math.sqrt(diagonal_sup(kernel)) * (s - t)
    if y == 0:
        return 0.0
    n = n_max + 1
    term = math.exp(2 * n * math.log(y) - math.lgamma(2 * n + 1))
    terms = [term]
    while term > 1e-18 * terms[0] or n < y:
        term *= y * y / ((2 * n + 1) * (2 * n + 2))
        n += 1
        terms.append(term)
        if len(terms) > 10_000:
            break
    return math.fsum(terms)


def series_partial_sum(kernel: KernelSpec, t: float, s: float, n_max: int, samples: int = MC_DEFAULT_SAMPLES,
                       seed: int = 0, threads: Optional[int] = None) -> SeriesApprox:
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    terms, errs, methods = [], [], []
    for n in range(n_max + 1):
        value, err, method = series_term(kernel, t, s, n, samples=samples, seed=seed, threads=threads)
        terms.append(value)
        errs.append(err)
        methods.append(method)
    bound = tail_bound(kernel, t, s, n_max)
    if bound >= 1.0:
        logger.warning("series tail bound %.3g >= 1 at s-t=%g; the partial sum is not a reliable estimate",
                       bound, s - t)
    approx = SeriesApprox(
        n_max=n_max,
        terms=terms,
        stderr=errs,
        total=math.fsum(terms),
        tail_bound=bound,
        method=methods,
        samples=samples if any(m == "monte_carlo" for m in methods) else 0,
        seed=seed if any(m == "monte_carlo" for m in methods) else None,
    )
    logger.info("series partial sum n_max=%d s-t=%g total=%.10g tail<=%.3g", n_max, s - t, approx.total, bound)
    return approx
