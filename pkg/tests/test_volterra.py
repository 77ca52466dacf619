import math

import numpy as np
import pytest

from utils.bessel import semicircle_mgf
from utils.errors import DomainError, ResourceError, TiltTooLargeError, TiltTooSmallError, UsageError
from utils.kernels import (
    Constant,
    Exponential,
    MixedExponential,
    PowerLaw,
    RatioFlat,
    Separable,
    evaluate,
)
from utils.volterra import (
    check_upper_bound,
    decoupled_solution,
    default_tilt,
    solution_to_frame,
    solve_stationary,
    solve_two_time,
    upper_bound_excess,
)


@pytest.fixture(scope="module")
def constant_solution():
    return solve_stationary(Constant(1.0), horizon=2.0, step=1e-3)


def test_boundary_and_positivity(constant_solution):
    assert constant_solution.values[0] == 1.0
    assert np.all(constant_solution.values > 0)
    assert np.all(np.diff(constant_solution.H) >= 0)


def test_constant_kernel_matches_semicircle_mgf(constant_solution):
    times = constant_solution.times[::10]
    expected = np.array([semicircle_mgf(t) for t in times])
    rel = np.abs(constant_solution.H[::10] / expected - 1.0)
    assert rel.max() < 1e-4


def test_constant_kernel_reference_values():
    solution = solve_stationary(Constant(1.0), horizon=1.0, step=1e-3, tilt=0.0)
    assert solution.value_at(0.1) == pytest.approx(1.00500833, abs=1e-6)
    assert solution.value_at(1.0) == pytest.approx(1.5906368, abs=1e-4)


def test_zero_kernel_gives_pure_tilt():
    solution = solve_stationary(Constant(0.0), horizon=3.0, step=1e-2, tilt=0.7)
    assert np.allclose(solution.values, np.exp(-0.7 * solution.times), rtol=1e-13)
    assert np.allclose(solution.H, 1.0, rtol=1e-13)


def test_taylor_seed():
    h = 0.01
    solution = solve_stationary(Exponential(2.0, 1.0), horizon=1.0, step=h)
    mu = default_tilt(Exponential(2.0, 1.0))
    assert solution.values[1] == pytest.approx(math.exp(-mu * h) * (1.0 + 0.5 * 2.0 * h * h), rel=1e-15)


def test_tilted_values_stay_below_universal_bound():
    kernel = MixedExponential(1.0, 1.0, 1.0)
    solution = solve_stationary(kernel, horizon=10.0, step=1e-2)
    assert solution.tilt == pytest.approx(2.0 * math.sqrt(2.0))
    assert np.all(solution.values <= 1.0 + 1e-3)


def test_gauge_invariance():
    kernel = Exponential(1.0, 1.0)
    a = solve_stationary(kernel, horizon=5.0, step=1e-2, tilt=2.0)
    b = solve_stationary(kernel, horizon=5.0, step=1e-2, tilt=3.5)
    t = a.times
    assert np.allclose(a.values * np.exp(-3.5 * t), b.values * np.exp(-2.0 * t), rtol=1e-12, atol=0)


def test_grid_convergence_is_second_order():
    kernel = Constant(1.0)
    h_values = [2e-2, 1e-2, 5e-3]
    ends = [solve_stationary(kernel, horizon=2.0, step=h).value_at(2.0) for h in h_values]
    order = math.log2(abs(ends[0] - ends[1]) / abs(ends[1] - ends[2]))
    assert order >= 1.8


NESTED_PAIRS = [
    (Constant(0.5), Constant(1.0)),
    (Exponential(1.0, 2.0), Exponential(1.0, 1.0)),
    (Exponential(1.0, 0.5), Constant(1.0)),
    (PowerLaw(1.0, 2.0), Constant(1.0)),
    (MixedExponential(0.5, 0.5, 1.0), MixedExponential(1.0, 0.5, 1.0)),
]


@pytest.mark.parametrize("small, large", NESTED_PAIRS, ids=lambda k: k.family)
def test_monotone_in_the_kernel(small, large):
    mu = default_tilt(large)
    lo = solve_stationary(small, horizon=8.0, step=1e-2, tilt=mu)
    hi = solve_stationary(large, horizon=8.0, step=1e-2, tilt=mu)
    assert np.all(lo.values <= hi.values * (1.0 + 1e-9))


@pytest.mark.parametrize(
    "kernel", [Constant(1.0), Constant(0.0), Exponential(1.0, 1.0), PowerLaw(2.0, 1.5)], ids=lambda k: k.family
)
def test_upper_bound(kernel):
    solution = solve_stationary(kernel, horizon=6.0, step=1e-2)
    assert check_upper_bound(solution) <= 1e-3


def test_upper_bound_is_strict_for_exponential_kernel():
    solution = solve_stationary(Exponential(1.0, 1.0), horizon=6.0, step=1e-2)
    assert np.all(upper_bound_excess(solution)[1:] < 0)


def test_errors():
    with pytest.raises(UsageError):
        solve_stationary(RatioFlat(C=1.0, a=1.0), horizon=1.0, step=0.1)
    with pytest.raises(DomainError):
        solve_stationary(Constant(1.0), horizon=1.0, step=0.0)
    with pytest.raises(DomainError):
        solve_stationary(Constant(1.0), horizon=-1.0, step=0.1)
    with pytest.raises(DomainError):
        solve_stationary(Constant(1.0), horizon=1.0, step=0.1, tilt=-1.0)
    with pytest.raises(ResourceError):
        solve_stationary(Constant(1.0), horizon=200.0, step=1e-2)
    with pytest.raises(DomainError):
        solve_two_time(Constant(1.0), t0=2.0, horizon=1.0, step=0.1)


def test_horizon_shorter_than_step_returns_boundary_only():
    solution = solve_stationary(Constant(1.0), horizon=0.05, step=0.1)
    assert solution.values.tolist() == [1.0]
    two = solve_two_time(Constant(1.0), t0=1.0, horizon=1.05, step=0.1)
    assert two.values.shape == (1, 1)


def test_overflow_names_a_larger_tilt():
    with pytest.raises(TiltTooSmallError) as info:
        solve_stationary(Constant(1.0), horizon=400.0, step=5e-2, tilt=0.0)
    assert info.value.suggested_mu >= 2.0


def test_underflow_names_a_smaller_tilt():
    with pytest.raises(TiltTooLargeError) as info:
        solve_stationary(Constant(0.0), horizon=100.0, step=0.1, tilt=10.0)
    assert info.value.suggested_mu == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(TiltTooLargeError) as info:
        solve_stationary(Exponential(1.0, 5.0), horizon=50.0, step=5e-2, tilt=20.0)
    assert 0.0 < info.value.suggested_mu < 2.0
    with pytest.raises(TiltTooLargeError):
        solve_two_time(Constant(0.0), t0=0.0, horizon=80.0, step=0.5, tilt=10.0)


def test_solution_frame(constant_solution):
    frame = solution_to_frame(constant_solution)
    assert list(frame.columns) == ["t", "G", "H"]
    assert len(frame) == constant_solution.values.size
    assert frame["H"].iloc[0] == 1.0


# ----------------------------
# Two-time solver
# ----------------------------

def test_two_time_reproduces_stationary_solver():
    kernel = Exponential(1.0, 1.0)
    two = solve_two_time(kernel, t0=0.0, horizon=3.0, step=1e-2)
    one = solve_stationary(kernel, horizon=3.0, step=1e-2)
    assert np.allclose(two.column(0).values, one.values, rtol=1e-8, atol=0)
    # time-translation invariance along the lower triangle
    assert np.allclose(two.column(100).values, one.values[: two.values.shape[0] - 100], rtol=1e-8, atol=0)
    assert np.all(np.diag(two.values) == 1.0)


def test_separable_unit_kernel_equals_constant_kernel():
    kernel = Separable(values=(1.0, 1.0), step=1.0)
    two = solve_two_time(kernel, t0=0.0, horizon=2.0, step=1e-2)
    one = solve_stationary(Constant(1.0), horizon=2.0, step=1e-2)
    assert np.allclose(two.column(50).values, one.values[:151], rtol=1e-6)


def test_separable_kernel_closed_form():
    kernel = Separable.from_function(lambda u: u, horizon=2.0, step=0.5)
    two = solve_two_time(kernel, t0=0.0, horizon=2.0, step=5e-3)
    for j, i in [(400, 0), (400, 200), (300, 100)]:
        s, t = two.times[j], two.times[i]
        expected = semicircle_mgf((s * s - t * t) / 2.0)
        assert two.H(j, i) == pytest.approx(expected, rel=1e-4)
        assert decoupled_solution(kernel, s, t) == pytest.approx(expected, rel=1e-12)


def test_two_time_upper_bound_and_monotonicity():
    flat = RatioFlat(C=1.0, a=1.0, stationary_part=Exponential(0.5, 1.0))
    solution = solve_two_time(flat, t0=1.0, horizon=4.0, step=2e-2)
    assert check_upper_bound(solution) <= 1e-3
    bigger = solve_two_time(Constant(1.5), t0=1.0, horizon=4.0, step=2e-2, tilt=solution.tilt)
    lower = np.tril_indices(solution.values.shape[0])
    assert np.all(solution.values[lower] <= bigger.values[lower] * (1.0 + 1e-9))
    assert evaluate(flat, 4.0, 1.0) <= 1.5


def test_slow_decay_approaches_the_constant_kernel():
    target = solve_stationary(Constant(1.0), horizon=2.0, step=1e-2).value_at(2.0)
    gaps = [
        abs(solve_stationary(Exponential(1.0, delta), horizon=2.0, step=1e-2).value_at(2.0) - target)
        for delta in (0.1, 0.01, 0.001)
    ]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2 * target
