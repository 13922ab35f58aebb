"""Vehicle model and tyre tests.

Reference values are either worked by hand from the model equations or come
from independent oracles coded in this file (scalar Fiala re-implementation,
RK4 fine integrator, nested scalar root-finding for steady-state cornering).
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from mpcc.errors import FrictionViolationError, InvalidStateError
from mpcc.tyre import TyreParams, derated_friction, fiala_lateral_force, fiala_partials, slip_angles
from mpcc.vehicle import (
    IX_FX,
    IX_PSI,
    IX_R,
    IX_THETA,
    IX_VX,
    IX_VY,
    IX_X,
    IX_Y,
    LOW_SPEED_FLOOR,
    ControlRate,
    VehicleParams,
    VehicleState,
    dynamics,
    dynamics_array,
    dynamics_jacobians,
    rk2_array,
    rk2_jacobians,
    rk2_step,
    split_longitudinal_force,
    static_axle_loads,
)

PARAMS = VehicleParams()
TYRES = TyreParams()


def fiala_ref(alpha, Fz, Fx_axle, C, mu):
    """Independent scalar re-implementation of the brush model formulas."""
    cap = mu * Fz
    F_eff = math.sqrt(max(cap * cap - Fx_axle * Fx_axle, 0.0))
    if F_eff <= 1e-9:
        return 0.0
    t = math.tan(alpha)
    if abs(t) >= 3.0 * F_eff / C:
        return -F_eff * math.copysign(1.0, t) if t != 0.0 else 0.0
    return (-C * t
            + C * C / (3.0 * F_eff) * abs(t) * t
            - C ** 3 / (27.0 * F_eff * F_eff) * t ** 3)


def rk4_reference(x, u, params, tyres, T, n_sub=2000):
    """Fine fixed-step RK4 integration used as the integration oracle."""
    x = np.asarray(x, dtype=float).copy()
    h = T / n_sub
    for _ in range(n_sub):
        k1 = dynamics_array(x, u, params, tyres)
        k2 = dynamics_array(x + 0.5 * h * k1, u, params, tyres)
        k3 = dynamics_array(x + 0.5 * h * k2, u, params, tyres)
        k4 = dynamics_array(x + h * k3, u, params, tyres)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


# ---------------------------------------------------------------------------
# axle loads and force split


def test_static_axle_loads_symmetric():
    p = VehicleParams(m=1800.0, lf=1.45, lr=1.45)
    Fzf, Fzr = static_axle_loads(p)
    assert Fzf == pytest.approx(8829.0, abs=1e-9)
    assert Fzr == pytest.approx(8829.0, abs=1e-9)


def test_static_axle_loads_lever_rule():
    p = VehicleParams(m=1800.0, lf=1.4, lr=1.5)
    Fzf, Fzr = static_axle_loads(p)
    assert Fzf == pytest.approx(9133.4, abs=0.05)
    assert Fzr == pytest.approx(8524.6, abs=0.05)
    assert Fzf + Fzr == pytest.approx(p.m * p.g, rel=1e-12)


def test_split_braking_uses_lambda_b():
    Fxf, Fxr = split_longitudinal_force(-8000.0, 0.6, 0.0)
    assert Fxf == pytest.approx(-4800.0)
    assert Fxr == pytest.approx(-3200.0)


def test_split_driving_uses_lambda_d():
    Fxf, Fxr = split_longitudinal_force(3000.0, 0.6, 0.0)
    assert Fxf == 0.0
    assert Fxr == pytest.approx(3000.0)


def test_split_properties_random():
    rng = np.random.default_rng(7)
    n = 100_000
    Fx = rng.uniform(-20e3, 20e3, n)
    lb = rng.uniform(0.0, 1.0, n)
    ld = rng.uniform(0.0, 1.0, n)
    Fxf, Fxr = split_longitudinal_force(Fx, lb, ld)
    np.testing.assert_allclose(Fxf + Fxr, Fx, rtol=1e-12, atol=1e-9)
    braking = Fx <= 0.0
    assert np.all(Fxf[braking] <= 1e-12) and np.all(Fxr[braking] <= 1e-12)
    assert np.all(Fxf[~braking] >= -1e-12) and np.all(Fxr[~braking] >= -1e-12)
    # continuity at Fx = 0
    f0, r0 = split_longitudinal_force(0.0, 0.3, 0.9)
    assert f0 == 0.0 and r0 == 0.0


# ---------------------------------------------------------------------------
# tyre model


def test_slip_angles_example():
    af, ar = slip_angles(20.0, 1.0, 0.5, 1.4, 1.55, 0.0)
    assert af == pytest.approx(0.08480, abs=5e-6)
    assert ar == pytest.approx(0.011249, abs=1e-6)


def test_slip_angles_steering_offset():
    af0, _ = slip_angles(20.0, 1.0, 0.5, 1.4, 1.55, 0.0)
    af, _ = slip_angles(20.0, 1.0, 0.5, 1.4, 1.55, 0.05)
    assert af == pytest.approx(af0 - 0.05, rel=1e-12)


def test_derated_friction_values():
    assert derated_friction(0.0, 8829.0, 1.0) == pytest.approx(1.0)
    assert derated_friction(0.6 * 8829.0, 8829.0, 1.0) == pytest.approx(0.8, abs=1e-12)
    assert derated_friction(-0.6 * 8829.0, 8829.0, 1.0) == pytest.approx(0.8, abs=1e-12)
    # full use of the circle clamps to zero inside the slack band
    assert derated_friction(8829.0, 8829.0, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_derated_friction_monotone_and_error():
    Fz, mu = 8000.0, 0.9
    fx = np.linspace(0.0, mu * Fz, 50)
    eta = derated_friction(fx, Fz, mu)
    assert np.all(np.diff(eta) < 0.0)
    with pytest.raises(FrictionViolationError):
        derated_friction(mu * Fz * 1.01, Fz, mu)


def test_fiala_matches_reference():
    rng = np.random.default_rng(3)
    Fz, C, mu = 9000.0, 105e3, 0.95
    for _ in range(500):
        alpha = rng.uniform(-0.5, 0.5)
        fx = rng.uniform(-0.99, 0.99) * mu * Fz
        got = fiala_lateral_force(alpha, Fz, fx, C, mu)
        want = fiala_ref(alpha, Fz, fx, C, mu)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-9)


def test_fiala_small_angle_slope():
    Fz, C, mu = 8829.0, 105e3, 1.0
    h = 1e-7
    slope = (fiala_lateral_force(h, Fz, 0.0, C, mu)
             - fiala_lateral_force(-h, Fz, 0.0, C, mu)) / (2 * h)
    assert slope == pytest.approx(-C, rel=1e-6)


def test_fiala_odd_and_bounded():
    rng = np.random.default_rng(11)
    Fz, C, mu = 9000.0, 120e3, 1.0
    alpha = rng.uniform(-1.2, 1.2, 2000)
    fx = rng.uniform(-0.95, 0.95, 2000) * mu * Fz
    fy_pos = fiala_lateral_force(alpha, Fz, fx, C, mu)
    fy_neg = fiala_lateral_force(-alpha, Fz, fx, C, mu)
    np.testing.assert_allclose(fy_pos, -fy_neg, rtol=1e-12, atol=1e-9)
    eta = derated_friction(fx, Fz, mu)
    assert np.all(np.abs(fy_pos) <= eta * mu * Fz + 1e-9)


def test_fiala_friction_circle_combined():
    rng = np.random.default_rng(5)
    Fz, C, mu = 8500.0, 105e3, 0.9
    alpha = rng.uniform(-1.0, 1.0, 5000)
    fx = rng.uniform(-1.0, 1.0, 5000) * mu * Fz
    fy = fiala_lateral_force(alpha, Fz, fx, C, mu)
    total = np.sqrt(fx * fx + fy * fy)
    assert np.all(total <= mu * Fz * (1.0 + 1e-12))


def test_fiala_continuous_at_slide_angle():
    Fz, C, mu = 9000.0, 105e3, 1.0
    for fx in (0.0, 0.5 * mu * Fz):
        F_eff = math.sqrt((mu * Fz) ** 2 - fx * fx)
        a_sl = math.atan(3.0 * F_eff / C)
        below = fiala_lateral_force(a_sl - 1e-9, Fz, fx, C, mu)
        above = fiala_lateral_force(a_sl + 1e-9, Fz, fx, C, mu)
        assert below == pytest.approx(above, rel=1e-6)
        assert above == pytest.approx(-F_eff, rel=1e-6)


def test_fiala_partials_match_fd():
    rng = np.random.default_rng(19)
    Fz, C, mu = 9000.0, 105e3, 1.0
    h = 1e-6
    for _ in range(200):
        alpha = rng.uniform(-0.4, 0.4)
        fx = rng.uniform(-0.9, 0.9) * mu * Fz
        _, da, dfx = fiala_partials(alpha, Fz, fx, C, mu)
        fd_a = (fiala_ref(alpha + h, Fz, fx, C, mu) - fiala_ref(alpha - h, Fz, fx, C, mu)) / (2 * h)
        fd_f = (fiala_ref(alpha, Fz, fx + 1.0, C, mu) - fiala_ref(alpha, Fz, fx - 1.0, C, mu)) / 2.0
        assert da == pytest.approx(fd_a, rel=2e-4, abs=1e-3)
        assert dfx == pytest.approx(fd_f, rel=2e-4, abs=1e-6)


# ---------------------------------------------------------------------------
# continuous dynamics


def test_dynamics_straight_coasting():
    st = VehicleState(vx=20.0)
    dx = dynamics(st, ControlRate(lambda_b=0.5), PARAMS, TYRES)
    assert dx[IX_X] == pytest.approx(20.0)
    assert dx[IX_THETA] == pytest.approx(20.0)
    assert dx[IX_VX] == pytest.approx(-PARAMS.c_drag * 400.0 / PARAMS.m, rel=1e-12)
    for idx in (IX_Y, IX_PSI, IX_VY, IX_R):
        assert dx[idx] == pytest.approx(0.0, abs=1e-15)


def test_dynamics_heading_rotation():
    # Pure kinematics: the global velocity must be the body velocity rotated
    # by psi, so its norm equals thetadot for any heading.
    st = VehicleState(psi=0.7, vx=15.0, vy=-1.2)
    dx = dynamics(st, ControlRate(), PARAMS, TYRES)
    assert math.hypot(dx[IX_X], dx[IX_Y]) == pytest.approx(dx[IX_THETA], rel=1e-12)
    assert dx[IX_X] == pytest.approx(15.0 * math.cos(0.7) + 1.2 * math.sin(0.7), rel=1e-12)
    assert dx[IX_Y] == pytest.approx(15.0 * math.sin(0.7) - 1.2 * math.cos(0.7), rel=1e-12)


def test_dynamics_input_passthrough():
    st = VehicleState(vx=10.0)
    dx = dynamics(st, ControlRate(ddelta=0.3, dFx=-4000.0, lambda_b=0.7), PARAMS, TYRES)
    assert dx[7] == 0.3
    assert dx[8] == -4000.0


def test_dynamics_rejects_low_speed_and_nan():
    with pytest.raises(InvalidStateError):
        dynamics(VehicleState(vx=0.5), ControlRate(), PARAMS, TYRES)
    with pytest.raises(InvalidStateError):
        dynamics(VehicleState(vx=float("nan")), ControlRate(), PARAMS, TYRES)
    with pytest.raises(InvalidStateError):
        rk2_step(VehicleState(vx=0.2), ControlRate(), PARAMS, TYRES, 0.05)


def test_dynamics_steady_state_cornering():
    """Nested scalar root-finding oracle for a steady cornering equilibrium.

    With lambda_d = 0 and lambda_b = 0 the front axle never carries
    longitudinal force, so for fixed (vx, delta) the conditions
    vdot_x = vdot_y = rdot = 0 reduce to two scalar equations in (vy, r),
    with Fx given explicitly by the longitudinal balance.
    """
    p = VehicleParams(c_drag=0.0, lambda_d=0.0)
    t = TYRES
    vx, delta = 15.0, 0.03
    Fzf, Fzr = static_axle_loads(p)

    def forces(vy, r):
        af = math.atan((vy + p.lf * r) / vx) - delta
        ar = math.atan((vy - p.lr * r) / vx)
        Fyf = fiala_ref(af, Fzf, 0.0, t.C_alpha_f, p.mu)
        Fx = Fyf * math.sin(delta) - p.m * r * vy  # vdot_x = 0, all force on rear
        Fyr = fiala_ref(ar, Fzr, Fx, t.C_alpha_r, p.mu)
        return Fyf, Fyr, Fx

    def residual_r(r, vy):
        Fyf, Fyr, _ = forces(vy, r)
        return p.lf * Fyf * math.cos(delta) - p.lr * Fyr

    def residual_vy(vy):
        r = brentq(residual_r, 1e-4, 0.45, args=(vy,), xtol=1e-14)
        Fyf, Fyr, _ = forces(vy, r)
        return (Fyf * math.cos(delta) + Fyr) / p.m - r * vx

    vy_star = brentq(residual_vy, -1.0, 1.0, xtol=1e-14)
    r_star = brentq(residual_r, 1e-4, 0.45, args=(vy_star,), xtol=1e-14)
    _, _, Fx_star = forces(vy_star, r_star)

    st = VehicleState(vx=vx, vy=vy_star, r=r_star, delta=delta, Fx=Fx_star)
    dx = dynamics(st, ControlRate(lambda_b=0.0), p, t)
    assert abs(dx[IX_VX]) < 1e-8
    assert abs(dx[IX_VY]) < 1e-8
    assert abs(dx[IX_R]) < 1e-8
    assert dx[IX_PSI] == pytest.approx(r_star, rel=1e-12)


# ---------------------------------------------------------------------------
# RK2 integration


def test_rk2_straight_exact_advance():
    p = VehicleParams(c_drag=0.0)
    st = VehicleState(vx=20.0)
    nxt = rk2_step(st, ControlRate(lambda_b=0.5), p, TYRES, 0.05)
    assert nxt.X == pytest.approx(1.0, abs=1e-12)
    assert nxt.theta == pytest.approx(1.0, abs=1e-12)
    assert nxt.vx == pytest.approx(20.0, abs=1e-12)
    assert nxt.Y == pytest.approx(0.0, abs=1e-14)


def test_rk2_second_order_step_halving():
    x0 = VehicleState(vx=18.0, vy=0.3, r=0.2, delta=0.05, Fx=-2000.0).as_array()
    u = np.array([0.1, -5000.0, 0.55])
    errs = []
    for Ts in (0.05, 0.025):
        ref = rk4_reference(x0, u, PARAMS, TYRES, Ts)
        got = rk2_array(x0, u, PARAMS, TYRES, Ts)
        errs.append(np.linalg.norm(got - ref))
    assert errs[0] / errs[1] >= 3.5


def test_rk2_matches_fine_reference():
    x0 = VehicleState(vx=15.0, vy=-0.2, r=-0.15, delta=-0.03, Fx=1500.0).as_array()
    u = np.array([-0.05, 2000.0, 0.4])
    ref = rk4_reference(x0, u, PARAMS, TYRES, 0.05)
    got = rk2_array(x0, u, PARAMS, TYRES, 0.05)
    assert np.linalg.norm(got - ref) < 1e-2


def test_rk2_deterministic():
    x0 = VehicleState(vx=18.0, vy=0.3, r=0.2, delta=0.05, Fx=-2000.0).as_array()
    u = np.array([0.1, -5000.0, 0.55])
    a = rk2_array(x0, u, PARAMS, TYRES, 0.05)
    b = rk2_array(x0.copy(), u.copy(), PARAMS, TYRES, 0.05)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# analytic Jacobians vs central differences


def _random_points(rng, n):
    X = np.zeros((n, 9))
    X[:, IX_X] = rng.uniform(-50, 50, n)
    X[:, IX_Y] = rng.uniform(-5, 5, n)
    X[:, IX_PSI] = rng.uniform(-1.0, 1.0, n)
    X[:, IX_VX] = rng.uniform(5.0, 25.0, n)
    X[:, IX_VY] = rng.uniform(-1.5, 1.5, n)
    X[:, IX_R] = rng.uniform(-0.6, 0.6, n)
    X[:, IX_THETA] = rng.uniform(0, 100, n)
    X[:, 7] = rng.uniform(-0.4, 0.4, n)
    X[:, 8] = rng.uniform(-12e3, 4e3, n)
    U = np.column_stack([
        rng.uniform(-0.8, 0.8, n),
        rng.uniform(-50e3, 50e3, n),
        rng.uniform(0.0, 1.0, n),
    ])
    return X, U


@pytest.mark.parametrize("which", ["continuous", "rk2"])
def test_jacobians_match_fd(which):
    rng = np.random.default_rng(23)
    X, U = _random_points(rng, 25)
    scale_x = np.array([1, 1, 0.1, 1, 0.5, 0.1, 1, 0.05, 1000.0])
    scale_u = np.array([0.1, 5000.0, 0.1])

    if which == "continuous":
        fun = lambda x, u: dynamics_array(x, u, PARAMS, TYRES)
        A, B = dynamics_jacobians(X, U, PARAMS, TYRES)
    else:
        fun = lambda x, u: rk2_array(x, u, PARAMS, TYRES, 0.05)
        A, B = rk2_jacobians(X, U, PARAMS, TYRES, 0.05)

    for i in range(X.shape[0]):
        x, u = X[i], U[i]
        for j in range(9):
            h = 1e-6 * scale_x[j]
            e = np.zeros(9); e[j] = h
            fd = (fun(x + e, u) - fun(x - e, u)) / (2 * h)
            np.testing.assert_allclose(A[i, :, j], fd, rtol=2e-5, atol=2e-5)
        for j in range(3):
            h = 1e-6 * scale_u[j]
            e = np.zeros(3); e[j] = h
            fd = (fun(x, u + e) - fun(x, u - e)) / (2 * h)
            np.testing.assert_allclose(B[i, :, j], fd, rtol=2e-5, atol=2e-5)
