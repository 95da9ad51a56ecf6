"""Weak-form residual of the measure differential equation."""
import numpy as np
import pytest

from mdeflow.afas import AfasConfig, Partition, build_afas
from mdeflow.fields import standard_test_battery
from mdeflow.measure import MeasureCurve
from mdeflow.residual import ResidualError, residual_suite, weak_residual
from mdeflow.scenarios import (
    drifted_wiener,
    gaussian_quantile_cloud,
    linear_gaussian_family,
    nonuniqueness,
    wiener,
    wiener_vfp,
)
from mdeflow.vfp import VectorFieldProbability, VfpMap, symmetrize

BATTERY_1D = standard_test_battery(1, 1.0)


def heat_curve(n_times=101, n_quant=10_000, s0=0.5, T=1.0):
    """mu(t) = N(0, t + s0^2), quantile-sampled."""
    times = np.linspace(0.0, T, n_times)
    return MeasureCurve(times, [gaussian_quantile_cloud([0.0], t + s0**2, n_quant) for t in times])


@pytest.fixture(scope="module")
def heat():
    return heat_curve()


def test_zero_field_constant_curve():
    mu = gaussian_quantile_cloud([0.0, 0.0], [1.0, 2.0], 20)
    curve = MeasureCurve([0.0, 0.5, 1.0], [mu, mu, mu])
    V = VfpMap.constant(VectorFieldProbability.from_vectors([1.0], [[0.0, 0.0]]))
    rep = residual_suite(curve, V, standard_test_battery(2, 1.0))
    assert rep.max_residual == 0.0
    assert all(r == 0.0 for _, r in rep.per_phi)


def test_not_a_node(heat):
    with pytest.raises(ResidualError):
        weak_residual(heat, VfpMap.constant(wiener_vfp()), BATTERY_1D[0], 0.123)


def test_heat_curve(heat):
    V = VfpMap.constant(wiener_vfp())
    for phi in BATTERY_1D:
        assert weak_residual(heat, V, phi, 1.0) <= 2e-3 * phi.c3_bound, phi.name


def test_heat_curve_second_order_in_time():
    # trapezoid error: halving the step divides the residual by about four
    V = VfpMap.constant(wiener_vfp())
    phi = BATTERY_1D[1]
    coarse = weak_residual(heat_curve(11, 4000), V, phi, 1.0)
    fine = weak_residual(heat_curve(21, 4000), V, phi, 1.0)
    assert 3.0 <= coarse / fine <= 5.0


def test_report_consistency(heat):
    rep = residual_suite(heat, VfpMap.constant(wiener_vfp()), BATTERY_1D, sample_times=[0.5, 1.0])
    assert rep.max_residual == max(r for _, r in rep.per_phi)
    assert rep.quadrature_error_estimate > 0
    d = rep.to_dict()
    assert d["per_phi"][0]["phi"].startswith("0:")
    with pytest.raises(ResidualError):
        residual_suite(heat, VfpMap.constant(wiener_vfp()), BATTERY_1D, sample_times=[0.333])


def test_separation(heat):
    noise = residual_suite(heat, wiener().V, BATTERY_1D).max_residual
    wrong = residual_suite(heat, drifted_wiener().V, BATTERY_1D).max_residual
    assert wrong > 10 * noise


def test_symmetrize_invariance(heat):
    v = VectorFieldProbability.from_vectors([0.7, 0.3], [1.0, -1.0])
    a = VfpMap.constant(v)
    b = VfpMap.constant(symmetrize(v))
    for phi in BATTERY_1D:
        assert weak_residual(heat, a, phi, 1.0) == pytest.approx(weak_residual(heat, b, phi, 1.0), abs=1e-10)


@pytest.mark.parametrize("c", [-2.0, 0.5, 4.0])
def test_linear_in_phi_exact(heat, c):
    # powers of two scale every floating-point operation exactly
    V = VfpMap.constant(wiener_vfp())
    for phi in BATTERY_1D:
        assert weak_residual(heat, V, phi.scaled(c), 1.0) == abs(c) * weak_residual(heat, V, phi, 1.0)


def test_linear_in_phi_general(heat):
    # the residual is a difference of O(1) terms, so rounding shows at ~1e-11 relative
    V = VfpMap.constant(wiener_vfp())
    for phi in BATTERY_1D:
        r = weak_residual(heat, V, phi, 1.0)
        assert weak_residual(heat, V, phi.scaled(-3.0), 1.0) == pytest.approx(3.0 * r, rel=1e-9, abs=1e-15)


def test_time_additivity(heat):
    V = drifted_wiener().V
    u_idx, s_idx = 40, 100
    # the [u, s] residual is that of the curve restarted at u
    tail = MeasureCurve(heat.times[u_idx:] - heat.times[u_idx], heat.states[u_idx:])
    s, u = float(heat.times[s_idx]), float(heat.times[u_idx])
    for phi in BATTERY_1D:
        whole = weak_residual(heat, V, phi, s)
        assert whole <= weak_residual(heat, V, phi, u) + weak_residual(tail, V, phi, s - u) + 1e-12


def test_time_indexed_family():
    # mu_1 solves the linear equation with a_c(t) = diag(1, e^t) exactly, so
    # the residual is discretization error and shrinks with the cloud size
    Vt = linear_gaussian_family()
    battery = standard_test_battery(2, 1.0)
    coarse = residual_suite(nonuniqueness(n_times=33, n_per_axis=48)[1], Vt, battery)
    fine = residual_suite(nonuniqueness(n_times=33, n_per_axis=96)[1], Vt, battery)
    assert coarse.max_residual <= 1e-2
    assert fine.max_residual <= coarse.max_residual / 3


def _wiener_afas_and_exact(n, budget=10_000):
    sc = wiener()
    curve = build_afas(sc.V, sc.mu0, Partition.uniform(1.0, n), AfasConfig(particle_budget=budget, seed=0))
    exact = MeasureCurve(curve.times, [gaussian_quantile_cloud([0.0], t, budget) for t in curve.times])
    return (residual_suite(curve, sc.V, BATTERY_1D).max_residual,
            residual_suite(exact, sc.V, BATTERY_1D).max_residual)


@pytest.mark.slow
def test_afas_residual_first_order():
    # one Wiener step moves int phi by tau/2 f2 + tau^2/24 f4 (fk = k-th
    # derivative) while the trapezoid rule books tau/2 f2 + tau^2/8 f4: the
    # per-step defect is O(tau^2), so the residual is O(tau) overall
    coarse, _ = _wiener_afas_and_exact(64)
    fine, _ = _wiener_afas_and_exact(256)
    assert fine <= coarse / 4


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="AFAS residual is first order in the step, the exact-curve residual second order")
def test_afas_residual_within_three_exact():
    afas_res, exact_res = _wiener_afas_and_exact(256)
    assert afas_res <= 3 * exact_res
