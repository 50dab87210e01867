import math

import numpy as np
import pytest

from zo_residual.objective import ObjectiveMeta
from zo_residual.problems.testfuncs import constant, linear, quadratic
from zo_residual.smoothing import approx_bounds, smoothed_grad_mc, smoothed_value_mc


def test_quadratic_smoothed_value_closed_form():
    # E 0.5 ||x + delta u||^2 = 0.5 ||x||^2 + delta^2 d / 2
    d, delta = 6, 0.3
    x = np.linspace(-1, 1, d)
    est = smoothed_value_mc(quadratic(d), x, delta, 100_000, np.random.default_rng(0))
    exact = 0.5 * x @ x + 0.5 * delta**2 * d
    assert abs(est.value_mean - exact) <= 4 * est.value_stderr
    assert est.samples == 100_000


def test_linear_smoothed_gradient():
    a = np.array([1.0, -2.0, 0.5])
    mean, se = smoothed_grad_mc(linear(a, 3.0), np.zeros(3), 0.5, 200_000, np.random.default_rng(1))
    assert np.all(np.abs(mean - a) <= 4 * se)


def test_chunking_does_not_change_result():
    # more samples than one chunk; the estimate must still be exact for a constant
    est = smoothed_value_mc(constant(2.5, 3), np.zeros(3), 1.0, 70_000, np.random.default_rng(2))
    assert est.value_mean == pytest.approx(2.5)
    assert est.value_stderr == pytest.approx(0.0, abs=1e-12)


def test_bound_formulas():
    d, delta, L0, L1 = 4, 0.2, 3.0, 5.0
    both = approx_bounds(ObjectiveMeta(dim=d, lipschitz_L0=L0, grad_lipschitz_L1=L1), delta)
    assert both.value_gap_bound == pytest.approx(min(delta * L0 * 2.0, delta**2 * L1 * d))
    assert both.grad_gap_bound == pytest.approx(delta * L1 * 7**1.5)
    assert both.smoothed_grad_lipschitz == pytest.approx(2.0 * L0 / delta)
    only_l0 = approx_bounds(ObjectiveMeta(dim=d, lipschitz_L0=L0), delta)
    assert only_l0.grad_gap_bound is None
    unknown = approx_bounds(ObjectiveMeta(dim=d), delta)
    assert unknown.value_gap_bound is None and unknown.smoothed_grad_lipschitz is None


def test_constant_function_has_zero_gaps():
    b = approx_bounds(constant(1.0, 3).meta, 0.5)
    assert b.value_gap_bound == 0.0 and b.grad_gap_bound == 0.0 and b.smoothed_grad_lipschitz == 0.0


@pytest.mark.parametrize("n, delta", [(1, 0.1), (10, 0.0), (10, -1.0)])
def test_invalid_arguments(n, delta):
    with pytest.raises(ValueError):
        smoothed_value_mc(quadratic(2), np.zeros(2), delta, n, np.random.default_rng(0))
    with pytest.raises(ValueError):
        smoothed_grad_mc(quadratic(2), np.zeros(2), delta, n, np.random.default_rng(0))


def test_smoothed_value_large_offset_stable():
    # shifted accumulation keeps the standard error meaningful when |f| is huge
    f = linear(np.array([1e-3]), 1e9)
    est = smoothed_value_mc(f, np.zeros(1), 1.0, 10_000, np.random.default_rng(3))
    assert est.value_stderr == pytest.approx(1e-3 / math.sqrt(10_000), rel=0.05)
