import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncopula.copula import CorrelationPath, build_schedule, sample_array
from dyncopula.exceptions import ConfigError, DomainError
from dyncopula.mathcore import RngStream
from dyncopula.nonparametric import (
    EPANECHNIKOV,
    FLAG_OUT_OF_RANGE,
    DegenerateWindowError,
    Kernel,
    default_grid,
    fit_m_curve,
    fit_q_curve,
    limit_lambda,
    local_linear_weights,
    optimal_bandwidth,
    pilot_second_derivative,
    practical_bandwidth,
    theorem4_limit_params,
)
from dyncopula.parametric import PEARSON, SPEARMAN, target_responses

mpmath.mp.dps = 30


def test_epanechnikov_moments_exact():
    k = lambda t: mpmath.mpf(3) / 4 * (1 - t * t)
    assert EPANECHNIKOV.mass == pytest.approx(float(mpmath.quad(k, [-1, 1])), abs=1e-15)
    assert EPANECHNIKOV.second_moment == pytest.approx(float(mpmath.quad(lambda t: t * t * k(t), [-1, 1])), abs=1e-15)
    assert EPANECHNIKOV.roughness == pytest.approx(float(mpmath.quad(lambda t: k(t) ** 2, [-1, 1])), abs=1e-15)
    assert (EPANECHNIKOV.second_moment, EPANECHNIKOV.roughness) == (0.2, 0.6)


def test_epanechnikov_shape():
    assert EPANECHNIKOV(0.0) == 0.75
    assert EPANECHNIKOV(1.5) == 0.0 and EPANECHNIKOV(-1.0) == 0.0
    t = np.linspace(-1, 1, 21)
    np.testing.assert_array_equal(EPANECHNIKOV(t), EPANECHNIKOV(-t))


def test_custom_kernel_moments_and_validation():
    triweight = Kernel.custom("triweight", lambda t: 35 / 32 * (1 - t * t) ** 3)
    assert triweight.mass == pytest.approx(1.0, abs=1e-12)
    assert triweight.second_moment == pytest.approx(1 / 9, abs=1e-12)
    assert triweight.roughness == pytest.approx(350 / 429, abs=1e-12)
    assert triweight(2.0) == 0.0
    with pytest.raises(ConfigError, match="symmetric"):
        Kernel.custom("skew", lambda t: 0.5 + 0.25 * t)
    with pytest.raises(ConfigError, match="integrates"):
        Kernel.custom("heavy", lambda t: np.ones_like(t))


@settings(max_examples=50)
@given(st.floats(0.01, 0.99), st.integers(50, 3000), st.floats(0.02, 0.49))
def test_weight_identity(s, n, h):
    if n * h < 5:
        return
    w = local_linear_weights(s, n, h)
    offset = s - np.arange(1, n + 1) / n
    scale = np.sum(np.abs(w * offset))
    assert abs(w @ offset) <= 1e-12 * scale
    assert w.sum() > 0


def test_weight_identity_example():
    w = local_linear_weights(0.5, 100, 0.1)
    offset = 0.5 - np.arange(1, 101) / 100
    assert abs(w @ offset) < 1e-15


@settings(max_examples=50)
@given(st.floats(0.01, 0.99), st.sampled_from([100, 3000]), st.sampled_from([0.05, 0.2]),
       st.floats(-5, 5), st.floats(-5, 5))
def test_reproduces_constants_and_linears(s, n, h, a, b):
    w = local_linear_weights(s, n, h)
    design = np.arange(1, n + 1) / n
    const = (w @ np.full(n, a)) / w.sum()
    assert const == pytest.approx(a, rel=1e-12, abs=1e-12)
    line = (w @ (a + b * design)) / w.sum()
    # near the ends the window is truncated; exactness still holds
    assert line == pytest.approx(a + b * s, rel=1e-12, abs=1e-11)


def test_window_errors():
    with pytest.raises(DomainError):
        local_linear_weights(0.0, 100, 0.1)
    with pytest.raises(DomainError):
        local_linear_weights(0.5, 100, 0.5)
    with pytest.raises(DomainError, match="n\\*h"):
        local_linear_weights(0.5, 100, 0.04)


def test_degenerate_window_error():
    # with n h >= 5 the lattice always fills the window, but a kernel whose
    # mass sits on a single design point still leaves a degenerate fit
    spike = Kernel("spike", lambda t: np.where(np.abs(t) < 0.01, 50.0, 0.0), 1.0, 0.0, 0.0)
    with pytest.raises(DegenerateWindowError):
        local_linear_weights(0.5, 100, 0.1, spike)


def test_fit_q_curve_constant_and_linear_responses():
    grid = [0.2, 0.5, 0.8]
    assert fit_q_curve(np.full(500, 0.03), grid, 0.1) == pytest.approx([0.03] * 3, rel=1e-13)
    design = np.arange(1, 501) / 500
    np.testing.assert_allclose(fit_q_curve(0.01 + 0.02 * design, grid, 0.1), 0.01 + 0.02 * np.array(grid),
                               rtol=1e-12)


@pytest.mark.parametrize("route", [SPEARMAN, PEARSON])
def test_noiseless_constant_targets_invert_exactly(route):
    z = target_responses(1000, 2.0, estimator=route)
    fit = fit_m_curve(z, default_grid(), 0.1, route=route)
    np.testing.assert_allclose(fit.values, 2.0, atol=1e-10)
    assert all(f == "" for f in fit.flags)


def test_out_of_range_points_are_flagged_not_clamped():
    z = np.full(200, 0.1)  # above 1/12
    z[:100] = 0.0
    fit = fit_m_curve(z, [0.2, 0.8], 0.1)
    assert fit.flags == ("", FLAG_OUT_OF_RANGE)
    assert math.isfinite(fit.values[0]) and math.isnan(fit.values[1])


def test_curve_rows():
    fit = fit_m_curve(np.zeros(100), [0.5], 0.2)
    (row,) = fit.rows()
    assert set(row) == {"s", "m_hat", "route", "h", "kernel", "flag"}
    assert row["kernel"] == "epanechnikov" and row["route"] == SPEARMAN
    with pytest.raises(ConfigError):
        fit_m_curve(np.zeros(100), [0.5], 0.2, route="kendall")


def test_default_grid():
    g = default_grid()
    assert g.size == 81 and g[0] == 0.1 and g[-1] == 0.9 and g[1] == 0.11


def test_optimal_bandwidth_ratio_and_scaling():
    h0 = optimal_bandwidth(1.3, 2000, route=SPEARMAN)
    h1 = optimal_bandwidth(1.3, 2000, route=PEARSON)
    assert h1 / h0 == pytest.approx(float((30 / mpmath.pi**2) ** (mpmath.mpf(1) / 5)), rel=1e-14)
    assert optimal_bandwidth(2.6, 2000) / h0 == pytest.approx(2 ** -0.4, rel=1e-14)
    assert optimal_bandwidth(-1.3, 2000) == pytest.approx(h0, rel=1e-15)
    n = 2000
    expect = (mpmath.log(n) ** 2 / n) ** 0.2 * (mpmath.pi**2 * 0.6 / (15 * (1.3 * 0.2) ** 2)) ** 0.2
    assert h0 == pytest.approx(float(expect), rel=1e-14)
    with pytest.raises(DomainError):
        optimal_bandwidth(0.0, 2000)


def test_practical_bandwidth():
    expect = 0.5 * (mpmath.log(2167) ** 2 / 2167) ** (mpmath.mpf(1) / 5)
    assert practical_bandwidth(2167, 0.5) == pytest.approx(float(expect), rel=1e-14)
    assert practical_bandwidth(500, 0.4) / practical_bandwidth(500, 0.2) == pytest.approx(2.0, rel=1e-15)
    assert practical_bandwidth(500, 0.0) == 0.0
    with pytest.raises(DomainError):
        fit_m_curve(np.zeros(500), [0.5], practical_bandwidth(500, 0.0))
    with pytest.raises(ConfigError):
        practical_bandwidth(5, 0.3)


def test_theorem4_params():
    assert theorem4_limit_params(0.0, 3.0) == (0.0, pytest.approx(math.pi**2 / 25))
    assert theorem4_limit_params(0.0, 3.0, route=PEARSON)[1] == pytest.approx(6 / 5)
    bias, _ = theorem4_limit_params(2.0, 0.5)
    assert bias == pytest.approx(0.5 * 0.5 * 2.0 * 0.2)
    # both routes share the bias
    assert theorem4_limit_params(2.0, 0.5, route=PEARSON)[0] == bias


def test_limit_lambda():
    assert limit_lambda(1000, 0.1) == pytest.approx(0.01 * math.sqrt(100) / math.log(1000))


def test_pilot_second_derivative_exact_on_quadratic_targets():
    n = 2000
    s = np.arange(1, n + 1) / n
    m = 1.0 + 0.5 * s + 1.5 * s * s
    z = np.arcsin((1 - m / math.log(n)) / 2) / (2 * math.pi)
    assert pilot_second_derivative(z) == pytest.approx(3.0, abs=1e-8)


def test_q_curve_mc_oracle():
    # Constant(1), n = 3000: Q_hat(0.5) centres on arcsin(rho / 2) / (2 pi)
    n, reps = 3000, 500
    h = practical_bandwidth(n, 0.3)
    sched = build_schedule(CorrelationPath.constant(1.0), n)
    q = np.array([fit_q_curve(sample_array(sched, RngStream(21, r)), [0.5], h)[0] for r in range(reps)])
    rho = 1 - 1 / math.log(n)
    target = math.asin(rho / 2) / (2 * math.pi)
    assert abs(q.mean() - target) < 3 * q.std() / math.sqrt(reps)


def test_linear_drift_mean_and_route_variances():
    n, reps = 3000, 500
    h = practical_bandwidth(n, 0.3)
    sched = build_schedule(CorrelationPath.linear(1.0, 1.0), n)
    sp, pe = [], []
    for r in range(reps):
        smp = sample_array(sched, RngStream(22, r))
        sp.append(fit_m_curve(smp, [0.5], h).values[0])
        pe.append(fit_m_curve(smp, [0.5], h, route=PEARSON).values[0])
    sp, pe = np.array(sp), np.array(pe)
    assert abs(sp.mean() - 1.5) < 3 * sp.std() / math.sqrt(reps)
    ratio = pe.var() / sp.var()
    assert abs(ratio / (2 / (math.pi**2 / 15)) - 1) < 0.35
