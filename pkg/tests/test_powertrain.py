import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from laptime.powertrain import (
    BatteryModel,
    MotorModel,
    TransmissionSpec,
    VehicleParams,
    battery_internal_power,
    drag_force,
    em_electrical_power_sd,
    em_electrical_power_si,
    em_loss_sd,
    em_power_limits,
    motor_speed,
    propulsion_force_exact,
    psd_factor,
    transmission_force_exact,
)


def _vehicle(**kw):
    base = dict(m_tot=1341.0, c_d=0.7, A_f=1.2, g=9.81, c_r=0.01, eta_fd=0.99)
    base.update(kw)
    return VehicleParams(**base)


def _motor(**kw):
    base = dict(alpha_m=1e-7, T_max=500.0, c_m1=-50.0, c_m2=2e5, omega_max=1500.0)
    base.update(kw)
    return MotorModel(**base)


def test_drag_at_standstill():
    assert drag_force(0.0, 0.0, _vehicle()) == pytest.approx(131.5521, abs=1e-4)


def test_drag_unit_aero():
    p = _vehicle(c_d=1.0, A_f=1.0, rho_air=1.0, c_r=0.0)
    assert drag_force(1341.0, 0.0, p) == pytest.approx(1.0, rel=1e-15)


@given(
    st.floats(0, 1e7), st.floats(-0.3, 0.3), st.floats(500, 3000), st.floats(0.1, 1.5),
    st.floats(0.5, 3.0), st.floats(0.9, 1.4), st.floats(0, 0.05),
)
def test_drag_duplicate_expression(E, theta, m, cd, Af, rho, cr):
    p = VehicleParams(m_tot=m, c_d=cd, A_f=Af, rho_air=rho, c_r=cr)
    expected = cd * Af * rho * E / m + m * 9.81 * (math.sin(theta) + cr * math.cos(theta))
    assert drag_force(E, theta, p) == pytest.approx(expected, rel=1e-12, abs=1e-9)


def test_drag_rejects_negative_energy():
    with pytest.raises(ValueError):
        drag_force(-1.0, 0.0, _vehicle())


def test_propulsion_branches():
    p = _vehicle()
    assert propulsion_force_exact(1000.0, 0.0, p) == pytest.approx(990.0)
    assert propulsion_force_exact(-1000.0, 0.0, p) == pytest.approx(-1010.101, abs=1e-3)
    assert propulsion_force_exact(0.0, 500.0, p) == pytest.approx(-500.0)


def test_propulsion_rejects_negative_brake():
    with pytest.raises(ValueError):
        propulsion_force_exact(0.0, -1.0, _vehicle())


@given(st.floats(-1e5, 1e5), st.floats(0.5, 1.0))
def test_propulsion_touches_relaxation(F, eta):
    p = _vehicle(eta_fd=eta)
    exact = propulsion_force_exact(F, 0.0, p)
    bound = min(eta * F, F / eta)
    assert exact == pytest.approx(bound, rel=1e-12, abs=1e-9)


def test_propulsion_continuous_at_zero():
    p = _vehicle()
    assert propulsion_force_exact(1e-12, 0.0, p) == pytest.approx(propulsion_force_exact(-1e-12, 0.0, p), abs=1e-10)


def test_transmission_branches():
    t = TransmissionSpec("cvt", eta_gb=0.95, gamma_min=0.5, gamma_max=2.0)
    assert transmission_force_exact(100.0, t) == pytest.approx(95.0)
    assert transmission_force_exact(-95.0, t) == pytest.approx(-100.0)


def test_em_speed_independent():
    assert em_electrical_power_si(1e5, _motor(alpha_m=0.0)) == 1e5
    assert em_electrical_power_si(1e5, _motor()) == pytest.approx(1.01e5)
    assert em_electrical_power_si(-1e5, _motor()) == pytest.approx(-0.99e5)


def test_em_speed_dependent_reductions():
    assert em_electrical_power_sd(500.0, 1e5, _motor()) == 1e5
    m = _motor(Q=np.diag([0.0, 0.0, 1e-7]))
    for P in (-2e5, 0.0, 3e4, 2e5):
        assert em_electrical_power_sd(800.0, P, m) == pytest.approx(em_electrical_power_si(P, m), rel=1e-14)


def test_em_speed_dependent_range():
    with pytest.raises(ValueError):
        em_electrical_power_sd(2000.0, 1e5, _motor())
    with pytest.raises(ValueError):
        em_electrical_power_sd(-5.0, 1e5, _motor())


psd = st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9).map(lambda a: np.array(a).reshape(3, 3))


@given(psd, st.floats(0, 1500), st.floats(-3e5, 3e5))
def test_psd_loss_nonnegative(B, omega, P):
    D = np.diag([10.0, 0.03, 3e-4])
    m = _motor(Q=D @ B @ B.T @ D)
    w, V = np.linalg.eigh(m.Q)
    x = np.array([1.0, omega, P])
    # eigen-decomposition oracle for x'Qx
    oracle = float(np.sum(np.clip(w, 0, None) * (V.T @ x) ** 2))
    assert em_loss_sd(omega, P, m) == pytest.approx(oracle, rel=1e-6, abs=1e-9 * (1 + x @ x))
    assert em_loss_sd(omega, P, m) >= -1e-9 * (1 + x @ x)


def test_power_limits():
    m = _motor()
    assert em_power_limits(0.0, m) == (0.0, 0.0)
    assert em_power_limits(100.0, m) == (-5e4, 5e4)


def test_power_limits_corner():
    m = _motor()
    w = m.c_m2 / (m.T_max - m.c_m1)
    assert w == pytest.approx(2e5 / 550.0)
    assert m.T_max * w == pytest.approx(m.c_m1 * w + m.c_m2, rel=1e-14)
    assert em_power_limits(w, m)[1] == pytest.approx(m.T_max * w, rel=1e-14)


@given(st.floats(0, 1500), st.floats(0, 1500), st.floats(0, 1))
def test_power_limits_concave(a, b, lam):
    m = _motor()
    mid = em_power_limits(lam * a + (1 - lam) * b, m)[1]
    assert mid >= lam * em_power_limits(a, m)[1] + (1 - lam) * em_power_limits(b, m)[1] - 1e-6


def test_battery_internal_power():
    b = BatteryModel(alpha_b=2e-7, E_b0=1e7)
    assert battery_internal_power(1e5, BatteryModel(0.0, 1e7)) == 1e5
    assert battery_internal_power(1e5, b) == pytest.approx(1.02e5)
    assert battery_internal_power(-1e5, b) == pytest.approx(-0.98e5)


@given(st.floats(0, 1e-5), st.floats(-1e6, 1e6))
def test_losses_nonnegative(alpha, P):
    assert battery_internal_power(P, BatteryModel(alpha, 1.0)) - P >= 0
    assert em_electrical_power_si(P, _motor(alpha_m=alpha)) - P >= 0


def test_battery_budget_split():
    b = BatteryModel(alpha_b=0.0, E_b0=9e6, N_laps=3)
    assert b.delta_Eb_max == 3e6
    assert b.with_budget(2e6).delta_Eb_max == 2e6
    with pytest.raises(ValueError):
        BatteryModel(alpha_b=0.0, E_b0=1.0, N_laps=0)


def test_motor_speed():
    p = _vehicle(gamma_fd=3.0, r_w=0.33)
    assert motor_speed(0.0, 2.0, p) == 0.0
    assert motor_speed(11.0, 2.0, p) == pytest.approx(200.0, rel=1e-14)


@given(st.floats(0, 100), st.floats(0.1, 5), st.floats(0.5, 12), st.floats(0.15, 0.5))
def test_motor_speed_duplicate_expression(v, g, gfd, rw):
    p = _vehicle(gamma_fd=gfd, r_w=rw)
    assert motor_speed(v, g, p) == pytest.approx(g * v * gfd / rw, rel=1e-14)


def test_parameter_validation():
    with pytest.raises(ValueError):
        _vehicle(eta_fd=1.2)
    with pytest.raises(ValueError):
        _motor(Q=-np.eye(3))
    with pytest.raises(ValueError):
        _motor(Q=np.array([[1.0, 1.0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
    with pytest.raises(ValueError):
        TransmissionSpec("cvt", gamma_min=2.0, gamma_max=1.0)
    with pytest.raises(ValueError):
        TransmissionSpec("cvt", optimize_sr_ratio=True)


@given(psd)
def test_psd_factor_reconstructs(B):
    Q = B @ B.T
    L = psd_factor(Q)
    np.testing.assert_allclose(L @ L.T, Q, atol=1e-12)
