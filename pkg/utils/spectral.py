"""
Laplace-domain analysis of stationary solutions.

- `laplace_of` integrates exp(-lambda u) H(u) w(u) on the solution grid (Simpson) and adds the tail
  beyond the horizon from the fitted model H ~ A exp(lambda_hat u) u^p_hat, in closed form through the
  upper incomplete gamma function whenever the weight is a sum of exponentials.
- Lyapunov exponents lambda_c come from bisection in every regime:
    * exponential kernels: j_{lambda/delta - 1} = 2 sqrt(c)/delta (Bessel zeros),
    * vanishing kernels:   lambda = (Hk)^(lambda),
    * constant + exponential / constant + algebraic: lambda - c1 (...)^(lambda) = 2 sqrt(c2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Union

import mpmath
import numpy as np
from scipy import integrate, optimize

from config import (
    DERIVATIVE_STEP,
    EXPONENTIAL_MAX_Z,
    LAMBDA_C_DELTA_COEFF,
    LAMBDA_XTOL,
    LAPLACE_MARGIN,
    NEAR_SINGULAR_STOP,
    RESIDUAL_TOL,
)
from utils.asymptotics import AsymptoticsFit, fit_exponential_power
from utils.bessel import (
    bessel_j_order_derivative,
    bessel_j_value,
    bessel_ratio,
    bessel_zeros,
    smallest_zero,
)
from utils.errors import (
    BracketingError,
    DivergenceError,
    DomainError,
    HorizonError,
    NumericalError,
    UsageError,
)
from utils.kernels import (
    AlgebraicMixed,
    Constant,
    Exponential,
    KernelSpec,
    MixedExponential,
    PowerLaw,
    kernel_to_dict,
)
from utils.volterra import StationarySolution

logger = logging.getLogger(__name__)

Weight = Union[None, KernelSpec, Callable[[np.ndarray], np.ndarray]]


@dataclass
class SpectralReport:
    kernel: Dict[str, Any]
    lambda_c: float
    method: str
    residual: float
    z: Optional[float] = None
    nu_c: Optional[float] = None
    A: Optional[float] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel,
            "lambda_c": self.lambda_c,
            "method": self.method,
            "residual": self.residual,
            "z": self.z,
            "nu_c": self.nu_c,
            "A": self.A,
            "extra": dict(self.extra),
        }


@dataclass
class LaplaceProfile:
    lambdas: np.ndarray
    values: np.ndarray
    tail: Dict[str, float]
    horizon: float

    def is_strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))


# ----------------------------
# Transforms
# ----------------------------

def tail_model(solution: StationarySolution) -> AsymptoticsFit:
    """Asymptotic model used to extrapolate the solution past its horizon (fitted once per solution)."""
    fit = solution.memo.get("tail_model")
    if fit is None:
        fit = solution.memo.setdefault("tail_model", fit_exponential_power(solution))
    return fit


def _weight_terms(weight: Weight):
    if weight is None:
        return [(1.0, 0.0)]
    if isinstance(weight, KernelSpec):
        return weight.exponential_terms()
    return None


def _weight_values(weight: Weight, u: np.ndarray) -> np.ndarray:
    if weight is None:
        return np.ones_like(u)
    if isinstance(weight, KernelSpec):
        return np.asarray(weight.profile(u), dtype=float)
    return np.asarray(weight(u), dtype=float)


def _incomplete_gamma_tail(log_amp: float, p: float, beta: float, T: float) -> float:
    """A int_T^inf exp(-beta u) u^p du = A beta^-(p+1) Gamma(p+1, beta T), beta > 0."""
    upper = mpmath.gammainc(p + 1.0, beta * T)
    return float(mpmath.exp(log_amp) * mpmath.power(beta, -(p + 1.0)) * upper)


def _tail(fit: AsymptoticsFit, lam: float, weight: Weight, T: float, clamp: bool) -> float:
    terms = _weight_terms(weight)
    if terms is not None:
        total = 0.0
        for w, rate in terms:
            if w == 0:
                continue
            beta = lam + rate - fit.lambda_hat
            if beta <= 0:
                if not clamp:
                    raise DivergenceError(f"tail diverges at lambda={lam:g} (fitted rate {fit.lambda_hat:g})")
                beta = 0.0
            if beta == 0:
                if fit.p_hat >= -1:
                    raise DivergenceError(f"tail diverges at the fitted abscissa (p_hat={fit.p_hat:.3f})")
                total += w * math.exp(fit.log_amplitude) * T ** (fit.p_hat + 1) / -(fit.p_hat + 1)
            else:
                total += w * _incomplete_gamma_tail(fit.log_amplitude, fit.p_hat, beta, T)
        return total

    beta = lam - fit.lambda_hat
    if beta < 0:
        if not clamp:
            raise DivergenceError(f"tail diverges at lambda={lam:g} (fitted rate {fit.lambda_hat:g})")
        beta = 0.0
    log_scale = fit.log_amplitude - beta * T

    def integrand(u: float) -> float:
        return math.exp(log_scale - beta * (u - T) + fit.p_hat * math.log(u)) * float(
            _weight_values(weight, np.asarray([u]))[0])

    value, err = integrate.quad(integrand, T, np.inf, limit=200)
    if not math.isfinite(value) or (beta == 0 and err > 1e-3 * max(abs(value), 1e-300)):
        raise DivergenceError(f"weighted tail does not converge at lambda={lam:g}")
    return float(value)


def laplace_of(solution: StationarySolution, lam: float, weight: Weight = None,
               margin: float = LAPLACE_MARGIN, clamp_tail: bool = False) -> float:
    """int_0^inf exp(-lam u) H(u) w(u) du: Simpson on the grid plus the extrapolated tail.

    With `clamp_tail`, a tail that would diverge is frozen at its value at the fitted abscissa; the
    root-finders use this to keep their defining functions continuous across lambda_hat.
    """
    fit = tail_model(solution)
    terms = _weight_terms(weight)
    decay = min(rate for w, rate in terms if w != 0) if terms and any(w != 0 for w, _ in terms) else 0.0
    if not clamp_tail and lam + decay <= fit.lambda_hat + margin:
        raise DivergenceError(
            f"lambda={lam:g} is within {margin:g} of the fitted growth rate {fit.lambda_hat - decay:g}")
    u = solution.times
    with np.errstate(under="ignore"):
        body_integrand = np.exp(np.log(solution.values) + (solution.tilt - lam) * u) * _weight_values(weight, u)
    body = float(integrate.simpson(body_integrand, x=u))
    return body + _tail(fit, lam, weight, float(u[-1]), clamp_tail)


def laplace_profile(solution: StationarySolution, lambdas: Sequence[float], weight: Weight = None) -> LaplaceProfile:
    lam = np.asarray(sorted(lambdas), dtype=float)
    values = np.asarray([laplace_of(solution, x, weight) for x in lam])
    fit = tail_model(solution)
    return LaplaceProfile(
        lambdas=lam,
        values=values,
        tail={"lambda_hat": fit.lambda_hat, "p_hat": fit.p_hat, "lnA_hat": fit.log_amplitude},
        horizon=float(solution.times[-1]),
    )


def laplace_limit_from_above(solution: StationarySolution, lambda_c: float, weight: Weight = None) -> float:
    """Estimate of the transform at lambda_c from the right, extrapolating linearly in sqrt(s)."""
    near, far = NEAR_SINGULAR_STOP, 4 * NEAR_SINGULAR_STOP
    h_near = laplace_of(solution, lambda_c + near, weight, margin=0.0, clamp_tail=True)
    h_far = laplace_of(solution, lambda_c + far, weight, margin=0.0, clamp_tail=True)
    return 2.0 * h_near - h_far


def laplace_constant_exact(C: float, lam: float) -> float:
    """(lam - sqrt(lam^2 - 4C)) / (2C), written in the cancellation-free form."""
    if lam < 2.0 * math.sqrt(C) or lam <= 0:
        raise DivergenceError(f"constant-kernel transform needs lambda >= 2 sqrt(C), got lambda={lam}")
    return 2.0 / (lam + math.sqrt(lam * lam - 4.0 * C))


def laplace_exponential_exact(c: float, delta: float, lam: float) -> float:
    """J_{lam/delta}(z) / (sqrt(c) J_{lam/delta - 1}(z)), z = 2 sqrt(c)/delta."""
    z = 2.0 * math.sqrt(c) / delta
    nu = lam / delta
    if nu <= 0:
        raise DomainError(f"need lambda > 0, got {lam}")
    try:
        ratio = bessel_ratio(nu, z)
    except DomainError:
        ratio = bessel_j_value(nu, z) / bessel_j_value(nu - 1.0, z)
    if not ratio > 0:
        raise DivergenceError(f"lambda={lam:g} is not above the abscissa of convergence")
    return ratio / math.sqrt(c)


def laplace_exponential_partial_fractions(c: float, delta: float, lam: float, terms: int = 100) -> float:
    """
    H^(lambda) for the exponential kernel from the expansion of the Bessel ratio over zeros,
    J_nu(z)/J_{nu-1}(z) = sum_k 2z / (j_{nu-1,k}^2 - z^2), nu = lambda/delta.

    The sum is truncated after `terms` zeros; the remainder uses j_k ~ (k + (nu-1)/2 - 1/4) pi.
    """
    if c <= 0 or delta <= 0:
        raise DomainError(f"need c > 0 and delta > 0, got c={c}, delta={delta}")
    order = lam / delta - 1.0
    if order <= -1.0:
        raise DomainError(f"need lambda > 0, got {lam}")
    z = 2.0 * math.sqrt(c) / delta
    zeros = bessel_zeros(order, terms)
    if z >= zeros[0]:
        raise DivergenceError(f"lambda={lam:g} is not above the abscissa of convergence")
    partial = math.fsum(2.0 * z / (j * j - z * z) for j in zeros)
    remainder = 2.0 * z / (math.pi ** 2 * (terms + 0.5 * order + 0.25))
    return (partial + remainder) / math.sqrt(c)


# ----------------------------
# Lyapunov exponents
# ----------------------------

def _bisect(fn: Callable[[float], float], lo: float, hi: float, label: str) -> float:
    f_lo, f_hi = fn(lo), fn(hi)
    if not (f_lo < 0 < f_hi):
        raise BracketingError(f"{label}: no sign change (F(lo)={f_lo:.3e}, F(hi)={f_hi:.3e})", (lo, hi))
    root = optimize.bisect(fn, lo, hi, xtol=LAMBDA_XTOL, maxiter=500)
    logger.debug("%s: root %.12f in [%g, %g]", label, root, lo, hi)
    return float(root)


def lambda_c_exponential(c: float, delta: float) -> SpectralReport:
    if c <= 0 or delta <= 0:
        raise DomainError(f"need c > 0 and delta > 0, got c={c}, delta={delta}")
    z = 2.0 * math.sqrt(c) / delta
    if z > EXPONENTIAL_MAX_Z:
        raise DomainError(f"z = 2 sqrt(c)/delta = {z:g} exceeds the supported {EXPONENTIAL_MAX_Z:g}")
    lo = -1.0 + 1e-9
    nu_c = _bisect(lambda nu: smallest_zero(nu) - z, lo, z, "lambda_c_exponential")
    residual = abs(smallest_zero(nu_c) - z)
    report = SpectralReport(
        kernel=kernel_to_dict(Exponential(c, delta)),
        lambda_c=delta * (nu_c + 1.0),
        method="bessel-zero",
        residual=residual,
        z=z,
        nu_c=nu_c,
    )
    logger.info("lambda_c exponential c=%g delta=%g: %.10f (nu_c=%.8f)", c, delta, report.lambda_c, nu_c)
    return report


def lambda_c_asymptotic(c: float, delta: float) -> float:
    """2 sqrt(c) - 2.34 c^(1/3) delta^(2/3), the small-delta expansion."""
    if c <= 0 or delta < 0:
        raise DomainError(f"need c > 0 and delta >= 0, got c={c}, delta={delta}")
    return 2.0 * math.sqrt(c) - LAMBDA_C_DELTA_COEFF * c ** (1.0 / 3.0) * delta ** (2.0 / 3.0)


def _check_solution(kernel: KernelSpec, solution: StationarySolution) -> None:
    if solution.kernel != kernel:
        raise UsageError("the solution was computed for a different kernel")


def _derivative(fn: Callable[[float], float], x: float, step: float) -> float:
    left, right = fn(x - step), fn(x + step)
    if math.isfinite(left):
        return (right - left) / (2.0 * step)
    return (fn(x + 2.0 * step) - right) / step


def lambda_c_vanishing(kernel: KernelSpec, solution: StationarySolution) -> SpectralReport:
    """Root of F(lambda) = lambda - (Hk)^(lambda) with A = F'(lambda_c)."""
    if not isinstance(kernel, (PowerLaw, Exponential)):
        raise UsageError(f"lambda_c_vanishing needs a power_law or exponential kernel, got {kernel.family}")
    _check_solution(kernel, solution)
    fit = tail_model(solution)
    T = float(solution.times[-1])
    if math.exp(-fit.lambda_hat * T) >= 1e-6:
        raise HorizonError(f"horizon T={T:g} too short: exp(-lambda_hat T) = {math.exp(-fit.lambda_hat * T):.2e}")

    def F(lam: float) -> float:
        try:
            return lam - laplace_of(solution, lam, kernel, margin=0.0, clamp_tail=True)
        except DivergenceError:
            return -math.inf

    lam_c = _bisect(F, 1e-6, 2.0 * math.sqrt(kernel.diagonal_sup()), "lambda_c_vanishing")
    residual = abs(F(lam_c))
    A = _derivative(F, lam_c, DERIVATIVE_STEP)
    if not A >= 1.0 - 1e-6:
        raise NumericalError(f"A = F'(lambda_c) = {A:.6g} < 1; the transform is not resolved (refine h or T)")
    report = SpectralReport(
        kernel=kernel_to_dict(kernel),
        lambda_c=lam_c,
        method="vanishing-fixed-point",
        residual=residual,
        A=A,
        extra={"limit_half_inverse_A": 1.0 / (2.0 * A), "limit_inverse_A": 1.0 / A,
               "lambda_hat": fit.lambda_hat},
    )
    logger.info("lambda_c vanishing %s: %.10f A=%.6f residual=%.2e", kernel.family, lam_c, A, residual)
    return report


def _sqrt_regime(label: str, method: str, kernel: KernelSpec, c2: float, c1: float,
                 transform: Callable[[float], float]) -> SpectralReport:
    floor = 2.0 * math.sqrt(c2)

    def F(lam: float) -> float:
        try:
            return lam - c1 * transform(lam) - floor
        except DivergenceError:
            return -math.inf

    lam_c = _bisect(F, floor, 2.0 * math.sqrt(c2 + c1), label)
    residual = abs(F(lam_c))
    if residual > RESIDUAL_TOL:
        logger.warning("%s residual %.2e above %.0e", label, residual, RESIDUAL_TOL)
    return SpectralReport(kernel=kernel_to_dict(kernel), lambda_c=lam_c, method=method, residual=residual)


def lambda_c_mixed(c2: float, c1: float, delta: float, solution: StationarySolution) -> SpectralReport:
    """Root of lambda - c1 H^(lambda + delta) = 2 sqrt(c2) for k = c2 + c1 exp(-delta u)."""
    if c2 <= 0 or c1 <= 0 or delta <= 0:
        raise DomainError(f"need c2, c1, delta > 0, got {c2}, {c1}, {delta}")
    kernel = MixedExponential(c2, c1, delta)
    _check_solution(kernel, solution)
    report = _sqrt_regime(
        "lambda_c_mixed", "mixed-sqrt", kernel, c2, c1,
        lambda lam: laplace_of(solution, lam + delta, margin=0.0, clamp_tail=True),
    )
    report.extra["laplace_at_lambda_c"] = laplace_limit_from_above(solution, report.lambda_c)
    report.extra["inverse_sqrt_c2"] = 1.0 / math.sqrt(c2)
    logger.info("lambda_c mixed c2=%g c1=%g delta=%g: %.10f", c2, c1, delta, report.lambda_c)
    return report


def lambda_c_algebraic(c2: float, c1: float, a: float, solution: StationarySolution) -> SpectralReport:
    """Root of lambda - c1 G^(lambda) = 2 sqrt(c2), G = H k1, k1(u) = (1+u)^-a."""
    if c2 <= 0 or c1 <= 0 or a < 1:
        raise DomainError(f"need c2, c1 > 0 and a >= 1, got {c2}, {c1}, {a}")
    kernel = AlgebraicMixed(c2, c1, a)
    _check_solution(kernel, solution)
    k1 = kernel.decaying_part()
    report = _sqrt_regime(
        "lambda_c_algebraic", "algebraic-sqrt", kernel, c2, c1,
        lambda lam: laplace_of(solution, lam, k1, margin=0.0, clamp_tail=True),
    )
    logger.info("lambda_c algebraic c2=%g c1=%g a=%g: %.10f", c2, c1, a, report.lambda_c)
    return report


def lambda_c_for(kernel: KernelSpec, solution: Optional[StationarySolution] = None) -> SpectralReport:
    """Dispatch to the solver of the kernel's regime."""
    if isinstance(kernel, Constant):
        lam = 2.0 * math.sqrt(kernel.C)
        return SpectralReport(kernel=kernel_to_dict(kernel), lambda_c=lam, method="closed-form", residual=0.0)
    if isinstance(kernel, Exponential):
        return lambda_c_exponential(kernel.c, kernel.delta)
    if solution is None:
        raise UsageError(f"{kernel.family} kernels need a time-domain solution for lambda_c")
    if isinstance(kernel, PowerLaw):
        return lambda_c_vanishing(kernel, solution)
    if isinstance(kernel, MixedExponential):
        return lambda_c_mixed(kernel.c2, kernel.c1, kernel.delta, solution)
    if isinstance(kernel, AlgebraicMixed):
        return lambda_c_algebraic(kernel.c2, kernel.c1, kernel.a, solution)
    raise UsageError(f"no lambda_c solver for the {kernel.family} family")


# ----------------------------
# Exponential-kernel amplitudes
# ----------------------------

def mittag_leffler_amplitude(c: float, delta: float) -> float:
    """
    lim exp(-lambda_c t) H(t) from the leading term of the expansion of H^ in the order nu = lambda/delta.

    The residue in nu is z J_{nu_c+1}(z)^2 / (2 nu_c int_0^z J_{nu_c}(t)^2 dt/t). Since nu - nu_c =
    (lambda - lambda_c)/delta and H^ carries a 1/sqrt(c), the time-domain amplitude is delta/sqrt(c)
    times that. Defined for nu_c > 0 only.
    """
    report = lambda_c_exponential(c, delta)
    nu_c, z = report.nu_c, report.z
    if nu_c <= 0:
        raise DomainError(f"nu_c = {nu_c:.6g} <= 0: int_0^z J_nu_c(t)^2 dt/t diverges at 0")
    integral, _ = integrate.quad(lambda t: bessel_j_value(nu_c, t) ** 2 / t, 0.0, z, limit=200)
    nu_residue = z * bessel_j_value(nu_c + 1.0, z) ** 2 / (2.0 * nu_c * integral)
    return delta / math.sqrt(c) * nu_residue


def pole_residue(c: float, delta: float) -> float:
    """lim (lambda - lambda_c) H^(lambda) from the Bessel representation, i.e. lim exp(-lambda_c t) H(t)."""
    report = lambda_c_exponential(c, delta)
    nu_c, z = report.nu_c, report.z
    slope = bessel_j_order_derivative(nu_c, z)
    if slope <= 0:
        raise NumericalError(f"dJ_nu/dnu at nu_c={nu_c:.6g} is not positive ({slope:.3e})")
    return delta * bessel_j_value(nu_c + 1.0, z) / (math.sqrt(c) * slope)
