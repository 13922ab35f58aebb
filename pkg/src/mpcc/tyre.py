"""Fiala brush tyre model with friction-circle derating.

All functions accept scalars or numpy arrays (broadcast on the last axis) and
are pure: no state, bit-identical outputs for equal inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrictionViolationError

# Relative slack on |Fx_axle| <= mu*Fz before derating refuses the input.
CLAMP_SLACK = 1e-6

# Effective peak force below which the tyre is treated as fully saturated
# longitudinally and produces no lateral force (avoids 0/0 in the cubic).
_F_EFF_TINY = 1e-9


@dataclass(frozen=True)
class TyreParams:
    """Per-axle cornering stiffnesses (N/rad)."""

    C_alpha_f: float = 105e3
    C_alpha_r: float = 120e3

    def __post_init__(self) -> None:
        if self.C_alpha_f <= 0.0 or self.C_alpha_r <= 0.0:
            raise ValueError("cornering stiffnesses must be positive")


def slip_angles(vx, vy, r, lf, lr, delta):
    """Front/rear slip angles of the single-track model.

    alpha_f = atan((vy + lf*r)/vx) - delta
    alpha_r = atan((vy - lr*r)/vx)

    Callers guarantee vx is at or above the low-speed floor.
    """
    alpha_f = np.arctan((vy + lf * r) / vx) - delta
    alpha_r = np.arctan((vy - lr * r) / vx)
    return alpha_f, alpha_r


def derated_friction(Fx_axle, Fz, mu):
    """Friction-circle derating eta = sqrt((mu*Fz)^2 - Fx_axle^2) / (mu*Fz).

    eta = 1 for a free-rolling axle, 0 when the longitudinal force uses the
    whole circle.  |Fx_axle| beyond mu*Fz by more than the relative slack
    raises FrictionViolationError; inside the slack band eta clamps to 0.
    """
    cap = mu * Fz
    excess = np.abs(Fx_axle) - cap * (1.0 + CLAMP_SLACK)
    if np.any(excess > 0.0):
        raise FrictionViolationError(
            f"|Fx_axle| exceeds friction circle mu*Fz = {np.max(cap):.1f} N"
        )
    ratio = np.asarray(Fx_axle, dtype=float) / cap
    eta = np.sqrt(np.clip(1.0 - ratio * ratio, 0.0, None))
    if np.ndim(Fx_axle) == 0 and np.ndim(Fz) == 0:
        return float(eta)
    return eta


def fiala_lateral_force(alpha, Fz, Fx_axle, C_alpha, mu):
    """Lateral force of the Fiala brush model under combined slip.

    The available lateral peak is F_eff = eta*mu*Fz with eta the
    friction-circle derating.  Below the slide angle
    alpha_sl = atan(3*F_eff/C_alpha) the cubic characteristic applies:

        Fy = -C*tan(a) + C^2/(3*F_eff)*|tan(a)|*tan(a) - C^3/(27*F_eff^2)*tan(a)^3

    and beyond it the tyre slides with Fy = -F_eff*sign(alpha).  The curve is
    C^1 at the transition and odd in alpha.

    Raises FrictionViolationError when Fx_axle leaves the friction circle.
    """
    derated_friction(Fx_axle, Fz, mu)
    Fy, _, _ = fiala_partials(alpha, Fz, Fx_axle, C_alpha, mu)
    if np.ndim(alpha) == 0 and np.ndim(Fx_axle) == 0 and np.ndim(Fz) == 0:
        return float(Fy)
    return Fy


def fiala_partials(alpha, Fz, Fx_axle, C_alpha, mu):
    """Fiala lateral force and its partials wrt alpha and Fx_axle.

    Returns (Fy, dFy/dalpha, dFy/dFx_axle).  Saturated regime: dFy/dalpha = 0.
    At full longitudinal saturation (F_eff ~ 0) everything is 0.

    Unlike ``derated_friction`` this never raises: optimizer trial points may
    overdraw the circle, in which case the axle simply has no lateral force
    left.  The friction inequality constraints push such iterates back.
    """
    alpha = np.asarray(alpha, dtype=float)
    Fx_axle = np.asarray(Fx_axle, dtype=float)
    cap = mu * Fz
    ratio = Fx_axle / cap
    F_eff = cap * np.sqrt(np.clip(1.0 - ratio * ratio, 0.0, None))
    F_eff = np.asarray(F_eff, dtype=float)

    alive = F_eff > _F_EFF_TINY
    Fe = np.where(alive, F_eff, 1.0)  # safe denominator

    t = np.tan(alpha)
    at = np.abs(t)
    sec2 = 1.0 + t * t
    C = C_alpha

    sliding = at >= 3.0 * Fe / C

    Fy_in = -C * t + C**2 / (3.0 * Fe) * at * t - C**3 / (27.0 * Fe * Fe) * t**3
    dFy_dt_in = -C + 2.0 * C**2 / (3.0 * Fe) * at - C**3 / (9.0 * Fe * Fe) * t * t
    dFy_dFe_in = -(C**2) / (3.0 * Fe * Fe) * at * t + 2.0 * C**3 / (27.0 * Fe**3) * t**3

    sgn = np.sign(t)
    Fy_sl = -Fe * sgn
    dFy_dFe_sl = -sgn

    Fy = np.where(sliding, Fy_sl, Fy_in)
    dFy_da = np.where(sliding, 0.0, dFy_dt_in * sec2)
    dFy_dFe = np.where(sliding, dFy_dFe_sl, dFy_dFe_in)

    # dF_eff/dFx = -Fx/F_eff (0 once the circle is exhausted)
    dFe_dFx = np.where(alive, -Fx_axle / Fe, 0.0)
    dFy_dFx = dFy_dFe * dFe_dFx

    Fy = np.where(alive, Fy, 0.0)
    dFy_da = np.where(alive, dFy_da, 0.0)
    dFy_dFx = np.where(alive, dFy_dFx, 0.0)
    return Fy, dFy_da, dFy_dFx
