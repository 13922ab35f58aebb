"""Nonlinear single-track vehicle model with brake repartition and progress state.

State vector (9):  [X, Y, psi, vx, vy, r, theta, delta, Fx]
Input vector (3):  [ddelta, dFx, lambda_b]

X, Y, psi are the global pose, (vx, vy, r) the body-frame velocities and yaw
rate, theta the travelled distance (progress), delta the road-wheel steering
angle and Fx the total longitudinal tyre force.  Steering rate and force rate
are the actual control inputs; lambda_b is the brake repartition.

Array variants (``dynamics_array``, ``rk2_array``, ...) operate on stacked
states of shape (..., 9) / inputs (..., 3) and are what the optimizer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError
from .tyre import TyreParams, fiala_partials, slip_angles

STATE_DIM = 9
INPUT_DIM = 3

# state indices
IX_X, IX_Y, IX_PSI, IX_VX, IX_VY, IX_R, IX_THETA, IX_DELTA, IX_FX = range(9)
# input indices
IU_DDELTA, IU_DFX, IU_LAMBDA = range(3)

#: Model validity floor on vx (m/s); slip angles blow up at standstill.
LOW_SPEED_FLOOR = 1.0


@dataclass(frozen=True)
class VehicleParams:
    """Chassis parameters of the single-track model."""

    m: float = 1830.0        # kg
    Izz: float = 3287.0      # kg m^2
    lf: float = 1.40         # m, CoG to front axle
    lr: float = 1.55         # m, CoG to rear axle
    mu: float = 1.0          # road friction coefficient
    c_drag: float = 0.38     # N s^2/m^2, aerodynamic drag on vx
    lambda_d: float = 0.0    # drive repartition (0 = rear-driven)
    r_veh: float = 1.2       # m, bounding-circle radius
    g: float = 9.81          # m/s^2

    def __post_init__(self) -> None:
        if min(self.m, self.Izz, self.lf, self.lr, self.mu, self.g, self.r_veh) <= 0.0:
            raise ValueError("mass, inertia, geometry, mu and g must be positive")
        if self.c_drag < 0.0:
            raise ValueError("c_drag must be non-negative")
        if not 0.0 <= self.lambda_d <= 1.0:
            raise ValueError("lambda_d must lie in [0, 1]")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class VehicleState:
    """Named view of the 9-element state vector."""

    X: float = 0.0
    Y: float = 0.0
    psi: float = 0.0
    vx: float = LOW_SPEED_FLOOR
    vy: float = 0.0
    r: float = 0.0
    theta: float = 0.0
    delta: float = 0.0
    Fx: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.X, self.Y, self.psi, self.vx, self.vy, self.r,
             self.theta, self.delta, self.Fx], dtype=float)

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have shape (9,), got {x.shape}")
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class ControlRate:
    """Named view of the 3-element input vector."""

    ddelta: float = 0.0
    dFx: float = 0.0
    lambda_b: float = 0.5

    def as_array(self) -> np.ndarray:
        return np.array([self.ddelta, self.dFx, self.lambda_b], dtype=float)

    @classmethod
    def from_array(cls, u) -> "ControlRate":
        u = np.asarray(u, dtype=float)
        if u.shape != (INPUT_DIM,):
            raise ValueError(f"input vector must have shape (3,), got {u.shape}")
        return cls(*(float(v) for v in u))


def static_axle_loads(params: VehicleParams) -> tuple[float, float]:
    """Static vertical loads (Fzf, Fzr) from the lever rule."""
    L = params.wheelbase
    Fzf = params.m * params.g * params.lr / L
    Fzr = params.m * params.g * params.lf / L
    return Fzf, Fzr


def split_longitudinal_force(Fx, lambda_b, lambda_d):
    """Front/rear share of the total longitudinal force.

    Braking (Fx <= 0) splits by the brake repartition lambda_b, driving by the
    fixed drive repartition lambda_d.  Continuous at Fx = 0.
    """
    braking = np.asarray(Fx) <= 0.0
    front = np.where(braking, lambda_b, lambda_d) * Fx
    rear = np.where(braking, 1.0 - np.asarray(lambda_b), 1.0 - lambda_d) * Fx
    if np.ndim(Fx) == 0 and np.ndim(lambda_b) == 0:
        return float(front), float(rear)
    return front, rear


def _validate(x: np.ndarray, u: np.ndarray) -> None:
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise InvalidStateError("non-finite state or input")
    if np.any(x[..., IX_VX] < LOW_SPEED_FLOOR):
        raise InvalidStateError(
            f"vx below the low-speed floor {LOW_SPEED_FLOOR} m/s")


def dynamics_array(x, u, params: VehicleParams, tyres: TyreParams) -> np.ndarray:
    """Continuous-time state derivative for stacked states/inputs.

    Shapes: x (..., 9), u (..., 3) -> (..., 9).  Slip-angle denominators are
    clamped at the low-speed floor so optimizer trial points never divide by
    zero; validated entry points reject such states outright.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi, vx, vy, r = x[..., IX_PSI], x[..., IX_VX], x[..., IX_VY], x[..., IX_R]
    delta, Fx = x[..., IX_DELTA], x[..., IX_FX]
    lam_b = u[..., IU_LAMBDA]

    vxs = np.maximum(vx, LOW_SPEED_FLOOR)
    alpha_f, alpha_r = slip_angles(vxs, vy, r, params.lf, params.lr, delta)
    Fzf, Fzr = static_axle_loads(params)
    Fxf, Fxr = split_longitudinal_force(Fx, lam_b, params.lambda_d)
    Fyf, _, _ = fiala_partials(alpha_f, Fzf, Fxf, tyres.C_alpha_f, params.mu)
    Fyr, _, _ = fiala_partials(alpha_r, Fzr, Fxr, tyres.C_alpha_r, params.mu)

    cd, sd = np.cos(delta), np.sin(delta)
    cp, sp = np.cos(psi), np.sin(psi)
    m, Izz, lf, lr = params.m, params.Izz, params.lf, params.lr

    out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (STATE_DIM,))
    out[..., IX_X] = vx * cp - vy * sp
    out[..., IX_Y] = vx * sp + vy * cp
    out[..., IX_PSI] = r
    out[..., IX_VX] = (-Fyf * sd + Fxf * cd + Fxr - params.c_drag * vx * vx) / m + r * vy
    out[..., IX_VY] = (Fyf * cd + Fxf * sd + Fyr) / m - r * vx
    out[..., IX_R] = (lf * Fyf * cd + lf * Fxf * sd - lr * Fyr) / Izz
    out[..., IX_THETA] = np.hypot(vx, vy)
    out[..., IX_DELTA] = u[..., IU_DDELTA]
    out[..., IX_FX] = u[..., IU_DFX]
    return out


def dynamics(state: VehicleState, control: ControlRate,
             params: VehicleParams, tyres: TyreParams) -> np.ndarray:
    """Validated state derivative for a single state/input pair."""
    x, u = state.as_array(), control.as_array()
    _validate(x, u)
    return dynamics_array(x, u, params, tyres)


def dynamics_jacobians(x, u, params: VehicleParams,
                       tyres: TyreParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (A, B) of ``dynamics_array`` wrt state and input.

    Shapes: (..., 9, 9) and (..., 9, 3).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    psi, vx, vy, r = x[..., IX_PSI], x[..., IX_VX], x[..., IX_VY], x[..., IX_R]
    delta, Fx = x[..., IX_DELTA], x[..., IX_FX]
    lam_b = u[..., IU_LAMBDA]
    m, Izz, lf, lr = params.m, params.Izz, params.lf, params.lr

    vxs = np.maximum(vx, LOW_SPEED_FLOOR)
    vx_alive = (vx > LOW_SPEED_FLOOR).astype(float)  # clamp derivative mask
    wf, wr = vy + lf * r, vy - lr * r
    den_f, den_r = vxs * vxs + wf * wf, vxs * vxs + wr * wr

    da_f = {
        "vx": -wf / den_f * vx_alive,
        "vy": vxs / den_f,
        "r": lf * vxs / den_f,
    }
    da_r = {
        "vx": -wr / den_r * vx_alive,
        "vy": vxs / den_r,
        "r": -lr * vxs / den_r,
    }

    alpha_f = np.arctan(wf / vxs) - delta
    alpha_r = np.arctan(wr / vxs)
    Fzf, Fzr = static_axle_loads(params)
    braking = Fx <= 0.0
    Fxf = np.where(braking, lam_b, params.lambda_d) * Fx
    Fxr = np.where(braking, 1.0 - lam_b, 1.0 - params.lambda_d) * Fx
    dFxf_dFx = np.where(braking, lam_b, params.lambda_d)
    dFxr_dFx = np.where(braking, 1.0 - lam_b, 1.0 - params.lambda_d)
    dFxf_dlb = np.where(braking, Fx, 0.0)
    dFxr_dlb = np.where(braking, -Fx, 0.0)

    Fyf, dFyf_da, dFyf_dFxf = fiala_partials(alpha_f, Fzf, Fxf, tyres.C_alpha_f, params.mu)
    Fyr, dFyr_da, dFyr_dFxr = fiala_partials(alpha_r, Fzr, Fxr, tyres.C_alpha_r, params.mu)

    cd, sd = np.cos(delta), np.sin(delta)
    cp, sp = np.cos(psi), np.sin(psi)
    sp_tot = np.hypot(vx, vy)

    A = np.zeros(shape + (STATE_DIM, STATE_DIM))
    B = np.zeros(shape + (STATE_DIM, INPUT_DIM))

    A[..., IX_X, IX_PSI] = -vx * sp - vy * cp
    A[..., IX_X, IX_VX] = cp
    A[..., IX_X, IX_VY] = -sp
    A[..., IX_Y, IX_PSI] = vx * cp - vy * sp
    A[..., IX_Y, IX_VX] = sp
    A[..., IX_Y, IX_VY] = cp
    A[..., IX_PSI, IX_R] = 1.0

    # Front lateral force partials through alpha_f; rear analogous.
    Fyf_vx, Fyf_vy, Fyf_r = (dFyf_da * da_f[k] for k in ("vx", "vy", "r"))
    Fyf_dd = -dFyf_da
    Fyr_vx, Fyr_vy, Fyr_r = (dFyr_da * da_r[k] for k in ("vx", "vy", "r"))
    Fyf_Fx = dFyf_dFxf * dFxf_dFx
    Fyr_Fx = dFyr_dFxr * dFxr_dFx
    Fyf_lb = dFyf_dFxf * dFxf_dlb
    Fyr_lb = dFyr_dFxr * dFxr_dlb

    A[..., IX_VX, IX_VX] = (-sd * Fyf_vx - 2.0 * params.c_drag * vx) / m
    A[..., IX_VX, IX_VY] = -sd * Fyf_vy / m + r
    A[..., IX_VX, IX_R] = -sd * Fyf_r / m + vy
    A[..., IX_VX, IX_DELTA] = (-sd * Fyf_dd - Fyf * cd - Fxf * sd) / m
    A[..., IX_VX, IX_FX] = (-sd * Fyf_Fx + cd * dFxf_dFx + dFxr_dFx) / m
    B[..., IX_VX, IU_LAMBDA] = (-sd * Fyf_lb + cd * dFxf_dlb + dFxr_dlb) / m

    A[..., IX_VY, IX_VX] = (cd * Fyf_vx + Fyr_vx) / m - r
    A[..., IX_VY, IX_VY] = (cd * Fyf_vy + Fyr_vy) / m
    A[..., IX_VY, IX_R] = (cd * Fyf_r + Fyr_r) / m - vx
    A[..., IX_VY, IX_DELTA] = (cd * Fyf_dd - Fyf * sd + Fxf * cd) / m
    A[..., IX_VY, IX_FX] = (cd * Fyf_Fx + sd * dFxf_dFx + Fyr_Fx) / m
    B[..., IX_VY, IU_LAMBDA] = (cd * Fyf_lb + sd * dFxf_dlb + Fyr_lb) / m

    A[..., IX_R, IX_VX] = (lf * cd * Fyf_vx - lr * Fyr_vx) / Izz
    A[..., IX_R, IX_VY] = (lf * cd * Fyf_vy - lr * Fyr_vy) / Izz
    A[..., IX_R, IX_R] = (lf * cd * Fyf_r - lr * Fyr_r) / Izz
    A[..., IX_R, IX_DELTA] = (lf * cd * Fyf_dd - lf * Fyf * sd + lf * Fxf * cd) / Izz
    A[..., IX_R, IX_FX] = (lf * cd * Fyf_Fx + lf * sd * dFxf_dFx - lr * Fyr_Fx) / Izz
    B[..., IX_R, IU_LAMBDA] = (lf * cd * Fyf_lb + lf * sd * dFxf_dlb - lr * Fyr_lb) / Izz

    sp_safe = np.maximum(sp_tot, 1e-12)
    A[..., IX_THETA, IX_VX] = vx / sp_safe
    A[..., IX_THETA, IX_VY] = vy / sp_safe

    B[..., IX_DELTA, IU_DDELTA] = 1.0
    B[..., IX_FX, IU_DFX] = 1.0
    return A, B


def rk2_array(x, u, params: VehicleParams, tyres: TyreParams, Ts: float) -> np.ndarray:
    """Explicit-midpoint (RK2) step of length Ts with zero-order-hold input."""
    k1 = dynamics_array(x, u, params, tyres)
    xm = x + 0.5 * Ts * k1
    return x + Ts * dynamics_array(xm, u, params, tyres)


def rk2_step(state: VehicleState, control: ControlRate, params: VehicleParams,
             tyres: TyreParams, Ts: float) -> VehicleState:
    """Validated explicit-midpoint step for a single state/input pair."""
    if Ts <= 0.0:
        raise ValueError("Ts must be positive")
    x, u = state.as_array(), control.as_array()
    _validate(x, u)
    return VehicleState.from_array(rk2_array(x, u, params, tyres, Ts))


def rk2_jacobians(x, u, params: VehicleParams, tyres: TyreParams,
                  Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (Ad, Bd) of ``rk2_array`` wrt state and input."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k1 = dynamics_array(x, u, params, tyres)
    A1, B1 = dynamics_jacobians(x, u, params, tyres)
    xm = x + 0.5 * Ts * k1
    Am, Bm = dynamics_jacobians(xm, u, params, tyres)

    eye = np.eye(STATE_DIM)
    inner = eye + 0.5 * Ts * A1
    Ad = eye + Ts * np.einsum("...ij,...jk->...ik", Am, inner)
    Bd = Ts * (0.5 * Ts * np.einsum("...ij,...jk->...ik", Am, B1) + Bm)
    return Ad, Bd
