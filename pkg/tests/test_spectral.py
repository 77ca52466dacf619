import math

import numpy as np
import pytest
from scipy import special

from utils.asymptotics import fit_exponential_power, fit_lyapunov_only
from utils.bessel import smallest_zero
from utils.errors import DivergenceError, DomainError, UsageError
from utils.kernels import AlgebraicMixed, Constant, Exponential, MixedExponential, PowerLaw
from utils.spectral import (
    lambda_c_algebraic,
    lambda_c_asymptotic,
    lambda_c_exponential,
    lambda_c_for,
    lambda_c_mixed,
    lambda_c_vanishing,
    laplace_constant_exact,
    laplace_exponential_exact,
    laplace_exponential_partial_fractions,
    laplace_limit_from_above,
    laplace_of,
    laplace_profile,
    mittag_leffler_amplitude,
    pole_residue,
    tail_model,
)
from utils.volterra import solve_stationary


@pytest.fixture(scope="module")
def exp_solution():
    return solve_stationary(Exponential(1.0, 1.0), horizon=60.0, step=1e-2)


@pytest.fixture(scope="module")
def exp_half_solution():
    return solve_stationary(Exponential(1.0, 0.5), horizon=40.0, step=1e-2)


@pytest.fixture(scope="module")
def constant_solution():
    return solve_stationary(Constant(1.0), horizon=30.0, step=5e-3)


# ----------------------------
# Closed forms
# ----------------------------

def test_constant_closed_form():
    assert laplace_constant_exact(1.0, 2.0) == pytest.approx(1.0)
    lam = 3.0
    value = laplace_constant_exact(1.0, lam)
    assert lam * value - 1.0 - value ** 2 == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DivergenceError):
        laplace_constant_exact(1.0, 1.5)


@pytest.mark.parametrize("c, delta", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
@pytest.mark.parametrize("lam", [3.0, 4.5])
def test_exponential_closed_form_satisfies_its_functional_equation(c, delta, lam):
    left = laplace_exponential_exact(c, delta, lam)
    right = 1.0 / (lam - c * laplace_exponential_exact(c, delta, lam + delta))
    assert left == pytest.approx(right, rel=1e-10)


def test_exponential_closed_form_against_scipy():
    expected = special.jv(3.0, 2.0) / special.jv(2.0, 2.0)
    assert laplace_exponential_exact(1.0, 1.0, 3.0) == pytest.approx(expected, rel=1e-12)


# ----------------------------
# Numerical transforms
# ----------------------------

def test_zero_kernel_transform():
    solution = solve_stationary(Constant(0.0), horizon=20.0, step=1e-2)
    assert laplace_of(solution, 2.0) == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("lam", [2.5, 3.0, 4.0])
def test_exponential_kernel_transform_matches_bessel_ratio(exp_solution, lam):
    expected = special.jv(lam, 2.0) / special.jv(lam - 1.0, 2.0)
    assert laplace_of(exp_solution, lam) == pytest.approx(expected, abs=1e-3)
    if lam == 3.0:
        assert laplace_of(exp_solution, lam) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("lam", [2.5, 3.0, 5.0])
def test_constant_kernel_transform(constant_solution, lam):
    value = laplace_of(constant_solution, lam)
    assert value == pytest.approx(laplace_constant_exact(1.0, lam), abs=1e-4)
    assert lam * value - 1.0 - value ** 2 == pytest.approx(0.0, abs=1e-4)


def test_transform_refuses_the_divergent_region(constant_solution):
    with pytest.raises(DivergenceError):
        laplace_of(constant_solution, 2.02)
    with pytest.raises(DivergenceError):
        laplace_of(constant_solution, 1.0)


@pytest.mark.parametrize(
    "kernel", [Constant(1.0), Exponential(1.0, 1.0), MixedExponential(1.0, 1.0, 1.0)], ids=lambda k: k.family
)
def test_transform_identity_with_kernel_weight(kernel):
    solution = solve_stationary(kernel, horizon=30.0, step=1e-2)
    lam_hat = fit_exponential_power(solution).lambda_hat
    for lam in (lam_hat + 0.5, lam_hat + 1.0, lam_hat + 2.0):
        h = laplace_of(solution, lam)
        hk = laplace_of(solution, lam, weight=kernel)
        assert abs(lam * h - 1.0 - h * hk) < 1e-3


def test_profile_is_decreasing_and_tends_to_inverse_lambda(exp_solution):
    profile = laplace_profile(exp_solution, [5.0, 2.0, 3.0, 10.0, 50.0])
    assert profile.lambdas.tolist() == [2.0, 3.0, 5.0, 10.0, 50.0]
    assert profile.is_strictly_decreasing()
    assert abs(50.0 * profile.values[-1] - 1.0) < 0.05
    assert profile.horizon == pytest.approx(60.0)
    assert set(profile.tail) == {"lambda_hat", "p_hat", "lnA_hat"}


def test_exponential_identity_in_time_domain(exp_half_solution):
    lam = 2.0
    h = laplace_of(exp_half_solution, lam)
    shifted = laplace_of(exp_half_solution, lam + 0.5)
    assert h == pytest.approx(1.0 / (lam - shifted), abs=1e-3)


# ----------------------------
# Lyapunov exponents
# ----------------------------

def test_lambda_c_exponential_reports():
    report = lambda_c_exponential(1.0, 0.5)
    assert report.method == "bessel-zero"
    assert report.residual < 1e-8
    assert abs(smallest_zero(report.nu_c) - report.z) < 1e-8
    assert report.lambda_c == pytest.approx(0.5 * (report.nu_c + 1.0))
    assert 0 < report.lambda_c < 2.0


def test_lambda_c_exponential_large_delta():
    report = lambda_c_exponential(1.0, 2.0)
    assert report.nu_c < -0.5
    assert 0 < report.lambda_c < 1.0


def test_lambda_c_exponential_scaling():
    c, delta = 4.0, 1.0
    scaled = math.sqrt(c) * lambda_c_exponential(1.0, delta / math.sqrt(c)).lambda_c
    assert lambda_c_exponential(c, delta).lambda_c == pytest.approx(scaled, abs=1e-8)


@pytest.mark.parametrize("delta", [0.01, 0.02, 0.05, 0.1])
def test_lambda_c_small_delta_asymptotics(delta):
    lam = lambda_c_exponential(1.0, delta).lambda_c
    assert lam <= 2.0
    assert abs(lam - (2.0 - 2.34 * delta ** (2.0 / 3.0))) <= 1.5 * delta


def test_lambda_c_exponential_domain():
    with pytest.raises(DomainError):
        lambda_c_exponential(1.0, 0.0)
    with pytest.raises(DomainError):
        lambda_c_exponential(1.0, 1e-3)


def test_lambda_c_asymptotic():
    assert lambda_c_asymptotic(1.0, 0.001) == pytest.approx(1.9766, abs=1e-4)
    assert lambda_c_asymptotic(4.0, 0.0) == 4.0


def test_vanishing_solver_agrees_with_bessel_zero(exp_solution):
    bessel = lambda_c_exponential(1.0, 1.0).lambda_c
    report = lambda_c_vanishing(Exponential(1.0, 1.0), exp_solution)
    assert report.method == "vanishing-fixed-point"
    assert report.lambda_c == pytest.approx(bessel, abs=1e-3)
    assert report.residual < 1e-8
    assert report.A >= 1.0
    assert fit_lyapunov_only(exp_solution) == pytest.approx(bessel, abs=0.03)


def test_vanishing_solver_large_delta():
    solution = solve_stationary(Exponential(1.0, 2.0), horizon=60.0, step=1e-2)
    report = lambda_c_vanishing(Exponential(1.0, 2.0), solution)
    assert report.lambda_c == pytest.approx(lambda_c_exponential(1.0, 2.0).lambda_c, abs=1e-3)


@pytest.mark.slow
def test_vanishing_solver_power_law():
    kernel = PowerLaw(1.0, 2.0)
    solution = solve_stationary(kernel, horizon=60.0, step=2e-2)
    report = lambda_c_vanishing(kernel, solution)
    assert 0 < report.lambda_c < 2.0
    assert report.lambda_c == pytest.approx(fit_lyapunov_only(solution), abs=0.1)


def test_vanishing_solver_checks_its_inputs(exp_solution):
    with pytest.raises(UsageError):
        lambda_c_vanishing(Constant(1.0), exp_solution)
    with pytest.raises(UsageError):
        lambda_c_vanishing(Exponential(1.0, 2.0), exp_solution)


@pytest.mark.slow
def test_mixed_regime():
    solution = solve_stationary(MixedExponential(1.0, 1.0, 1.0), horizon=60.0, step=1e-2)
    report = lambda_c_mixed(1.0, 1.0, 1.0, solution)
    assert 2.0 < report.lambda_c < 2.0 * math.sqrt(2.0)
    assert report.residual < 1e-8
    # the fitted t^p tail beyond T carries most of the remaining error
    assert report.extra["laplace_at_lambda_c"] == pytest.approx(1.0, abs=5e-2)
    assert laplace_limit_from_above(solution, report.lambda_c) == report.extra["laplace_at_lambda_c"]


def test_mixed_regime_with_vanishing_coupling():
    kernel = MixedExponential(1.0, 1e-8, 1.0)
    solution = solve_stationary(kernel, horizon=20.0, step=1e-2)
    report = lambda_c_mixed(1.0, 1e-8, 1.0, solution)
    assert report.lambda_c == pytest.approx(2.0, abs=1e-4)


@pytest.mark.slow
def test_algebraic_regime():
    solution = solve_stationary(AlgebraicMixed(1.0, 1.0, 2.0), horizon=40.0, step=1e-2)
    report = lambda_c_algebraic(1.0, 1.0, 2.0, solution)
    assert report.method == "algebraic-sqrt"
    assert 2.0 < report.lambda_c < 2.0 * math.sqrt(2.0)
    assert report.residual < 1e-8
    assert report.lambda_c == pytest.approx(fit_lyapunov_only(solution), abs=0.05)


def test_lambda_c_for_dispatch(exp_solution):
    assert lambda_c_for(Constant(4.0)).lambda_c == 4.0
    assert lambda_c_for(Constant(4.0)).method == "closed-form"
    assert lambda_c_for(Exponential(1.0, 1.0)).method == "bessel-zero"
    with pytest.raises(UsageError):
        lambda_c_for(PowerLaw(1.0, 2.0))
    with pytest.raises(UsageError):
        lambda_c_mixed(1.0, 1.0, 1.0, exp_solution)


def test_exponential_rates_stay_below_the_constant_kernel_rate():
    rates = [lambda_c_exponential(1.0, d).lambda_c for d in (0.05, 0.2, 1.0, 3.0)]
    assert all(r <= 2.0 for r in rates)
    assert all(a > b for a, b in zip(rates, rates[1:]))


# ----------------------------
# Amplitudes
# ----------------------------

def test_pole_residue_matches_time_domain_limit(exp_half_solution):
    report = lambda_c_exponential(1.0, 0.5)
    residue = pole_residue(1.0, 0.5)
    assert residue > 0
    t_end = exp_half_solution.times[-1]
    time_domain = exp_half_solution.value_at(t_end) * math.exp(-report.lambda_c * t_end)
    assert time_domain == pytest.approx(residue, rel=2e-2)


def test_pole_residue_scaling():
    assert pole_residue(4.0, 2.0) == pytest.approx(pole_residue(1.0, 1.0), rel=1e-6)


def test_mittag_leffler_amplitude():
    amplitude = mittag_leffler_amplitude(1.0, 0.1)
    assert amplitude > 0 and math.isfinite(amplitude)
    scaled = mittag_leffler_amplitude(4.0, 0.2)
    assert scaled == pytest.approx(amplitude, rel=1e-6)
    with pytest.raises(DomainError):
        mittag_leffler_amplitude(1.0, 2.0)


def test_constant_limit_is_bracketed_by_vanishing_derivative(exp_half_solution):
    report = lambda_c_vanishing(Exponential(1.0, 0.5), exp_half_solution)
    t = exp_half_solution.times
    tail = exp_half_solution.values * np.exp((exp_half_solution.tilt - report.lambda_c) * t)
    limit = float(tail[-1])
    assert limit > 0
    assert 0.5 / (2.0 * report.A) <= limit <= 2.0 / report.A
    assert report.extra["limit_half_inverse_A"] == pytest.approx(0.5 / report.A)


def test_mittag_leffler_amplitude_is_the_time_domain_limit():
    c, delta = 1.0, 0.1
    amplitude = mittag_leffler_amplitude(c, delta)
    assert amplitude == pytest.approx(pole_residue(c, delta), rel=1e-5)
    solution = solve_stationary(Exponential(c, delta), horizon=30.0, step=1e-2)
    lam_c = lambda_c_exponential(c, delta).lambda_c
    t_end = solution.times[-1]
    time_domain = solution.value_at(t_end) * math.exp(-lam_c * t_end)
    assert abs(time_domain - amplitude) < 0.05 * amplitude
    assert time_domain == pytest.approx(amplitude, rel=5e-3)


@pytest.mark.parametrize("c, delta, lam", [(1.0, 1.0, 3.0), (2.0, 0.5, 2.5), (0.5, 2.0, 1.0)])
def test_partial_fraction_expansion_matches_bessel_ratio(c, delta, lam):
    series = laplace_exponential_partial_fractions(c, delta, lam, terms=400)
    assert series == pytest.approx(laplace_exponential_exact(c, delta, lam), rel=1e-5)


def test_partial_fraction_expansion_refuses_the_divergent_region():
    lam_c = lambda_c_exponential(1.0, 1.0).lambda_c
    with pytest.raises(DivergenceError):
        laplace_exponential_partial_fractions(1.0, 1.0, 0.5 * lam_c)


def test_tail_model_is_fitted_once_per_solution(exp_solution):
    fit = tail_model(exp_solution)
    assert tail_model(exp_solution) is fit
    assert exp_solution.memo["tail_model"] is fit
    other = solve_stationary(Exponential(1.0, 1.0), horizon=20.0, step=1e-2)
    assert tail_model(other) is not fit
