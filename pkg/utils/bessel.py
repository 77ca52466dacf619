# utils/bessel.py
"""
Bessel functions of real order and the semicircle moment-generating function.

The power series is only used on its validated range z <= BESSEL_SERIES_MAX_Z; larger arguments
(needed for small-delta exponential kernels) go through scipy.special.jv.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List

import numpy as np
from scipy import optimize, special

from config import (
    ASYMPTOTIC_ZERO_COEFF,
    BESSEL_MAX_TERMS,
    BESSEL_SERIES_MAX_Z,
    ZERO_XTOL,
)
from utils.errors import BracketingError, DomainError, PoleError

logger = logging.getLogger(__name__)

RATIO_START_OFFSET = 40
ZERO_FLOOR = 1e-8
ZERO_SCAN_STEP = 0.25


@dataclass(frozen=True)
class BesselEval:
    order: float
    argument: float
    value: float
    terms: int
    truncation_error: float


def _check_order(nu: float) -> None:
    if not nu > -1:
        raise DomainError(f"Bessel order must satisfy nu > -1, got nu={nu}")


def bessel_j(nu: float, z: float) -> BesselEval:
    """J_nu(z) by its power series, stopping once terms are negligible past the peak."""
    _check_order(nu)
    if z < 0 or z > BESSEL_SERIES_MAX_Z:
        raise DomainError(f"Bessel series is validated on 0 <= z <= {BESSEL_SERIES_MAX_Z}, got z={z}")
    if z == 0:
        if nu == 0:
            value = 1.0
        elif nu > 0:
            value = 0.0
        else:
            value = math.inf
        return BesselEval(nu, z, value, 1, 0.0)

    half = 0.5 * z
    q = half * half
    term = math.exp(nu * math.log(half) - special.gammaln(nu + 1.0))
    terms = [term]
    running = term
    m = 0
    next_term = math.inf
    while m < BESSEL_MAX_TERMS:
        m += 1
        term *= -q / (m * (nu + m))
        terms.append(term)
        running += term
        next_term = abs(term * q / ((m + 1) * (nu + m + 1)))
        # past the peak the terms shrink monotonically; stop on the scale of the result
        if m > half and next_term <= 1e-16 * max(1.0, abs(running)):
            break
    return BesselEval(nu, z, math.fsum(terms), len(terms), next_term)


def bessel_j_value(nu: float, z: float) -> float:
    """J_nu(z) as a float: series on the validated range, scipy beyond it."""
    _check_order(nu)
    if z < 0:
        raise DomainError(f"Bessel argument must be nonnegative, got z={z}")
    if z <= BESSEL_SERIES_MAX_Z:
        return bessel_j(nu, z).value
    return float(special.jv(nu, z))


def bessel_j_order_derivative(nu: float, z: float, step: float = 1e-5) -> float:
    """dJ_nu(z)/dnu by a centered difference."""
    lo = max(nu - step, -1.0 + 0.5 * step)
    hi = nu + step
    return (bessel_j_value(hi, z) - bessel_j_value(lo, z)) / (hi - lo)


def _zero_bracket(nu: float):
    if nu < 0:
        return ZERO_FLOOR, smallest_zero(0.0)
    lo = max(ZERO_FLOOR, nu)
    hi = nu + ASYMPTOTIC_ZERO_COEFF * max(nu, 1.0) ** (1.0 / 3.0) + 3.0
    return lo, hi


@lru_cache(maxsize=4096)
def smallest_zero(nu: float) -> float:
    """Smallest positive zero j_nu of J_nu, by bisection inside the first lobe."""
    _check_order(nu)
    lo, hi = _zero_bracket(nu)
    f_lo = bessel_j_value(nu, lo)
    f_hi = bessel_j_value(nu, hi)
    if not (f_lo > 0 and f_hi < 0):
        raise BracketingError(
            f"J_{nu:g} has no sign change bracketing its first zero "
            f"(J(lo)={f_lo:.3e}, J(hi)={f_hi:.3e})",
            (lo, hi),
        )
    root = optimize.bisect(lambda x: bessel_j_value(nu, x), lo, hi, xtol=ZERO_XTOL, maxiter=500)
    logger.debug("smallest_zero(%g) = %.12f in [%g, %g]", nu, root, lo, hi)
    return float(root)


def zero_asymptotic(nu: float) -> float:
    """Large-order approximation j_nu ~ nu + 1.85575 nu^(1/3)."""
    if nu <= 0:
        raise DomainError(f"zero_asymptotic needs nu > 0, got nu={nu}")
    return nu + ASYMPTOTIC_ZERO_COEFF * nu ** (1.0 / 3.0)


def bessel_zeros(nu: float, count: int) -> List[float]:
    """The first `count` positive zeros of J_nu: sign changes on a scan grid, refined by brentq."""
    _check_order(nu)
    if count < 1:
        raise DomainError(f"need count >= 1, got {count}")
    start = max(ZERO_FLOOR, nu)
    stop = (count + 0.5 * nu + 1.0) * math.pi + 4.0
    grid = np.arange(start, stop, ZERO_SCAN_STEP)
    values = special.jv(nu, grid)
    flips = np.flatnonzero(np.signbit(values[:-1]) != np.signbit(values[1:]))
    if flips.size < count:
        raise BracketingError(f"found {flips.size} of {count} zeros of J_{nu:g} below {stop:g}", (start, stop))
    return [
        float(optimize.brentq(lambda x: special.jv(nu, x), grid[i], grid[i + 1], xtol=ZERO_XTOL))
        for i in flips[:count]
    ]


def bessel_ratio(nu: float, z: float) -> float:
    """h(nu, z) = J_nu(z) / J_{nu-1}(z) by backward recurrence of its continued fraction from h(nu+40, z) = 0."""
    if nu <= 0:
        raise DomainError(f"bessel_ratio needs nu > 0, got nu={nu}")
    if not 0 < z < BESSEL_SERIES_MAX_Z:
        raise DomainError(f"bessel_ratio needs 0 < z < {BESSEL_SERIES_MAX_Z}, got z={z}")
    h = 0.0
    denom = 1.0
    for k in range(RATIO_START_OFFSET - 1, -1, -1):
        x = z / (2.0 * (nu + k))
        denom = 1.0 - x * h
        if denom == 0.0:
            h = math.inf
            continue
        h = x / denom
    if not math.isfinite(h) or abs(denom) < 1e-12:
        raise PoleError(f"J_{nu - 1:g}({z:g}) vanishes; the Bessel ratio has a pole here")
    return h


def semicircle_mgf(theta: float) -> float:
    """E exp(theta S) for S standard semicircular: sum_n theta^(2n) / (n! (n+1)!)."""
    q = theta * theta
    if q == 0:
        return 1.0
    term = 1.0
    terms = [term]
    peak = term
    n = 0
    while True:
        term *= q / ((n + 1) * (n + 2))
        n += 1
        if not math.isfinite(term):
            return math.inf
        terms.append(term)
        peak = max(peak, term)
        if n > abs(theta) and term <= 1e-17 * peak:
            break
    total = math.fsum(terms)
    return total if math.isfinite(total) else math.inf
