"""MPCC horizon problem: cost terms, constraints, weight schedules, assembly.

Decision variables per horizon of N stages (z has length 12N):

    z = [u_0, ..., u_{N-1}, x_1, ..., x_N]

with stage k owning input u_k (applied over [k, k+1]) and the state x_{k+1}
it produces.  x_0 is the measured state and enters as a parameter.  Dynamics
appear as N blocks of 9 defect equalities x_{k+1} - F(x_k, u_k) = 0, so the
assembled problem is a multiple-shooting transcription.

Obstacle and edge penalty weights follow the Gaussian prioritisation schedule
but are evaluated on the warm-start trajectory and held fixed within one
solve; the penalty residual itself stays a function of the decision variables
through the one-sided form min(D - D_sft, 0).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleInitialStateError, InvalidStateError, PathTooShortError
from .path import Obstacle, ReferencePath, TrackSpec, project_to_path
from .solver import SolverSettings
from .tyre import TyreParams
from .vehicle import (
    INPUT_DIM,
    IX_FX,
    IX_THETA,
    IX_VX,
    IX_VY,
    IX_X,
    IX_Y,
    LOW_SPEED_FLOOR,
    STATE_DIM,
    VehicleParams,
    VehicleState,
    dynamics_jacobians,
    rk2_array,
    rk2_jacobians,
    split_longitudinal_force,
    static_axle_loads,
)

IX_DELTA = 7

#: Relative slack on the initial-state friction check.
INIT_FRICTION_SLACK = 0.05


class Mode(enum.Enum):
    """Controller variants compared in the closed-loop study."""

    MPCC_CA = "mpcc-ca"
    MPCC_NO_CA = "mpcc-no-ca"
    FRENET_BASELINE = "frenet-baseline"


@dataclass(frozen=True)
class MpccWeights:
    """Stage-cost weights and safety distances."""

    q_con: float = 1.0
    q_lag: float = 100.0
    q_vel: float = 0.2
    q_ddelta: float = 50.0
    q_dFx: float = 1e-7
    q_lambda: float = 5.0
    P_k_obs: float = 200.0
    P_k_edge: float = 200.0
    D_sft_obs: float = 1.5
    D_sft_edge: float = 0.5

    def __post_init__(self) -> None:
        if self.D_sft_obs <= 0.0 or self.D_sft_edge <= 0.0:
            raise ValueError("safety distances must be positive")
        if min(self.q_con, self.q_lag, self.q_vel, self.q_ddelta, self.q_dFx,
               self.q_lambda, self.P_k_obs, self.P_k_edge) < 0.0:
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class Bounds:
    """Actuator and force box bounds; None means derive from the vehicle."""

    delta_max: float = 0.5       # rad
    ddelta_max: float = 0.8      # rad/s
    dFx_max: float = 60e3        # N/s
    Fx_min: float | None = None  # default -sf*mu*m*g
    Fx_max: float | None = None  # default 0.3*m*g

    def resolve(self, vehicle: VehicleParams, sf: float) -> tuple[float, float]:
        fx_lo = -sf * vehicle.mu * vehicle.m * vehicle.g if self.Fx_min is None else self.Fx_min
        fx_hi = 0.3 * vehicle.m * vehicle.g if self.Fx_max is None else self.Fx_max
        return fx_lo, fx_hi


@dataclass(frozen=True)
class MpccConfig:
    """Everything the controller needs besides the scenario itself."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tyres: TyreParams = field(default_factory=TyreParams)
    N: int = 50
    Ts: float = 0.05
    sf: float = 0.95
    weights: MpccWeights = field(default_factory=MpccWeights)
    bounds: Bounds = field(default_factory=Bounds)
    mode: Mode = Mode.MPCC_CA
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self) -> None:
        if self.N < 2 or self.Ts <= 0.0:
            raise ValueError("need N >= 2 and Ts > 0")
        if not 0.0 < self.sf <= 1.0:
            raise ValueError("sf must lie in (0, 1]")
        lo, hi = self.bounds.resolve(self.vehicle, self.sf)
        if lo >= hi or self.bounds.delta_max <= 0.0 or self.bounds.ddelta_max <= 0.0 \
                or self.bounds.dFx_max <= 0.0:
            raise ValueError("bounds must satisfy min < max")


# ---------------------------------------------------------------------------
# pure per-stage operations


def v2o_weight(D, P_k: float, D_sft: float):
    """Gaussian prioritisation schedule.

    q = P_k inside the object (D < 0), P_k*exp(-2 D^2/D_sft^2) within the
    safety band, 0 beyond it.  Implemented exactly as printed, including the
    downward jump of size P_k*e^-2 at D = D_sft.
    """
    D = np.asarray(D, dtype=float)
    band = P_k * np.exp(-2.0 * D * D / (D_sft * D_sft))
    w = np.where(D < 0.0, P_k, np.where(D <= D_sft, band, 0.0))
    if np.ndim(D) == 0:
        return float(w)
    return w


def step_weight(D, P_k: float, D_sft: float):
    """On/off schedule used by the Frenet baseline: P_k while D <= D_sft."""
    D = np.asarray(D, dtype=float)
    w = np.where(D <= D_sft, P_k, 0.0)
    if np.ndim(D) == 0:
        return float(w)
    return w


def ideal_brake_repartition(Fzf: float, Fzr: float) -> float:
    """Front share of braking force that locks both axles simultaneously."""
    return Fzf / (Fzf + Fzr)


def friction_constraint(Fx_axle, Fz, mu: float, sf: float):
    """Residual |Fx_axle| - sf*mu*Fz (feasible when <= 0)."""
    out = np.abs(np.asarray(Fx_axle, dtype=float)) - sf * mu * np.asarray(Fz, dtype=float)
    if np.ndim(Fx_axle) == 0:
        return float(out)
    return out


def track_constraint(X, Y, track: TrackSpec, theta=None):
    """Residual (X-Xc)^2 + (Y-Yc)^2 - (W/2)^2 against the nearest track centre.

    Inside the horizon problem the centre point comes from the stage's own
    progress variable; pass ``theta`` for that reading.  Without it the point
    is found by projection, which suits diagnostics.
    """
    if theta is None:
        theta, _ = project_to_path(float(X), float(Y), track.centerline)
    Xc, Yc, _, _ = track.centerline.lookup(theta)
    out = (np.asarray(X, float) - Xc) ** 2 + (np.asarray(Y, float) - Yc) ** 2 \
        - (0.5 * track.width) ** 2
    if np.ndim(X) == 0:
        return float(out)
    return out


def stage_cost(state: VehicleState, control, path: ReferencePath,
               obstacles: list[Obstacle], track: TrackSpec,
               weights: MpccWeights, v_des: float, lambda_ideal: float,
               r_veh: float = 1.2) -> float:
    """Single-stage cost with the schedule evaluated at the stage's own distances.

    Diagnostic/reference form of the horizon cost: contouring, lag, velocity,
    input rates, brake-repartition error, plus one-sided obstacle and edge
    penalties weighted by the Gaussian schedule.
    """
    from .path import contouring_lag_errors, v2e_distance, v2o_distance_cartesian

    x = state.as_array() if isinstance(state, VehicleState) else np.asarray(state, float)
    u = control.as_array() if hasattr(control, "as_array") else np.asarray(control, float)
    w = weights

    e_con, e_lag = contouring_lag_errors(x[IX_X], x[IX_Y], x[IX_THETA], path)
    e_vel = float(np.hypot(x[IX_VX], x[IX_VY])) - v_des
    cost = (w.q_con * e_con**2 + w.q_lag * e_lag**2 + w.q_vel * e_vel**2
            + w.q_ddelta * u[0]**2 + w.q_dFx * u[1]**2
            + w.q_lambda * (u[2] - lambda_ideal)**2)
    for obs in obstacles:
        D = v2o_distance_cartesian(x[IX_X], x[IX_Y], obs, r_veh)
        e = min(D - w.D_sft_obs, 0.0)
        cost += v2o_weight(D, w.P_k_obs, w.D_sft_obs) * e * e
    if track is not None:
        for D in v2e_distance(x[IX_X], x[IX_Y], track, r_veh):
            e = min(D - w.D_sft_edge, 0.0)
            cost += v2o_weight(D, w.P_k_edge, w.D_sft_edge) * e * e
    return float(cost)


# ---------------------------------------------------------------------------
# assembled horizon problem


class MpccProblem:
    """Multiple-shooting NLP for one control step.  Built by ``assemble``."""

    is_ocp = True

    def __init__(self, x0: np.ndarray, path: ReferencePath, obstacles: list[Obstacle],
                 track: TrackSpec, cfg: MpccConfig, z0: np.ndarray,
                 w_obs: np.ndarray, w_edge: np.ndarray,
                 obs_frenet: np.ndarray | None):
        self.x0 = x0
        self.path = path
        self.obstacles = list(obstacles)
        self.track = track
        self.cfg = cfg
        self.mode = cfg.mode
        self.N = cfg.N
        self.nx = STATE_DIM
        self.nu = INPUT_DIM
        self.n = cfg.N * (STATE_DIM + INPUT_DIM)
        self.z0 = z0
        self.w_obs = w_obs          # (N, n_obs) frozen schedule weights
        self.w_edge = w_edge        # (N, 2) frozen edge weights (left, right)
        self.obs_frenet = obs_frenet  # (n_obs, 2) of (s_o, d_o) in baseline mode
        self.v_des = path.v_des

        veh = cfg.vehicle
        self.Fzf, self.Fzr = static_axle_loads(veh)
        self.lambda_ideal = ideal_brake_repartition(self.Fzf, self.Fzr)
        self.fx_lo, self.fx_hi = cfg.bounds.resolve(veh, cfg.sf)
        self._obs_xy = np.array([[o.X, o.Y] for o in self.obstacles]).reshape(-1, 2)
        self._obs_r = np.array([o.radius for o in self.obstacles])

        lb_u = np.tile([-cfg.bounds.ddelta_max, -cfg.bounds.dFx_max, 0.0], cfg.N)
        ub_u = np.tile([cfg.bounds.ddelta_max, cfg.bounds.dFx_max, 1.0], cfg.N)
        lb_x = np.tile([-np.inf, -np.inf, -np.inf, LOW_SPEED_FLOOR, -np.inf,
                        -np.inf, -np.inf, -cfg.bounds.delta_max, self.fx_lo], cfg.N)
        ub_x = np.tile([np.inf, np.inf, np.inf, np.inf, np.inf,
                        np.inf, np.inf, cfg.bounds.delta_max, self.fx_hi], cfg.N)
        self.lb = np.concatenate([lb_u, lb_x])
        self.ub = np.concatenate([ub_u, ub_x])

        # diagonal preconditioning: pick scales so the direct cost curvature
        # is O(1) per scaled variable, making the identity initial Hessian a
        # usable model from the first iteration
        w = cfg.weights

        def curv_scale(q, lo=1e-3, hi=10.0):
            return float(np.clip(1.0 / np.sqrt(2.0 * q + 1e-12), lo, hi))

        s_pos = curv_scale(max(w.q_con, w.q_lag, w.P_k_obs, w.P_k_edge))
        s_vel = curv_scale(w.q_vel)
        self._sx = np.array([s_pos, s_pos, 0.2, s_vel, s_vel, 0.5, s_pos,
                             0.3, 1e4])
        self._su = np.array([curv_scale(w.q_ddelta),
                             curv_scale(w.q_dFx, hi=1e5),
                             curv_scale(w.q_lambda)])
        self.var_scale = np.concatenate([np.tile(self._su, cfg.N), np.tile(self._sx, cfg.N)])
        self.eq_scale = np.tile(self._sx, cfg.N)
        mu, sf = veh.mu, cfg.sf
        self.ineq_scale = np.tile(
            [sf * mu * self.Fzf, sf * mu * self.Fzr, (0.5 * track.width) ** 2], cfg.N)

    # -- layout helpers ------------------------------------------------------

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(U (N,3), Xs (N,9)) views of the flat decision vector."""
        nu = 3 * self.N
        return z[:nu].reshape(self.N, 3), z[nu:].reshape(self.N, 9)

    def join(self, U: np.ndarray, Xs: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(U).ravel(), np.asarray(Xs).ravel()])

    def initial_guess(self) -> np.ndarray:
        return self.z0.copy()

    # -- stage chain: previous states for each defect block -------------------

    def _prev_states(self, Xs: np.ndarray) -> np.ndarray:
        return np.vstack([self.x0[None, :], Xs[:-1]])

    # -- objective -------------------------------------------------------------

    def _tracking_terms(self, Xs: np.ndarray, want_grad: bool):
        """Contouring/lag errors plus their (X, Y, theta) partials."""
        th = Xs[:, IX_THETA]
        Xt, Yt, Pt, dXt, dYt, dPt = self.path.lookup_with_derivatives(th)
        dx = Xs[:, IX_X] - Xt
        dy = Xs[:, IX_Y] - Yt
        sp, cp = np.sin(Pt), np.cos(Pt)
        e_con = sp * dx - cp * dy
        e_lag = -cp * dx - sp * dy
        if not want_grad:
            return e_con, e_lag, None
        g = {
            "con": (sp, -cp, dPt * (cp * dx + sp * dy) + (-sp * dXt + cp * dYt)),
            "lag": (-cp, -sp, dPt * (sp * dx - cp * dy) + (cp * dXt + sp * dYt)),
        }
        return e_con, e_lag, g

    def _edge_offsets(self, Xs: np.ndarray, want_grad: bool):
        """Signed centreline offset expressed as e_c (= -d) and its partials."""
        th = Xs[:, IX_THETA]
        cl = self.track.centerline
        Xc, Yc, Pc, dXc, dYc, dPc = cl.lookup_with_derivatives(th)
        dx = Xs[:, IX_X] - Xc
        dy = Xs[:, IX_Y] - Yc
        sp, cp = np.sin(Pc), np.cos(Pc)
        e_c = sp * dx - cp * dy
        if not want_grad:
            return e_c, None, (dx, dy, dXc, dYc)
        grad = (sp, -cp, dPc * (cp * dx + sp * dy) + (-sp * dXc + cp * dYc))
        return e_c, grad, (dx, dy, dXc, dYc)

    def _obstacle_distances(self, Xs: np.ndarray, want_grad: bool, tracking=None):
        """Per-stage, per-obstacle distance D and its (X, Y, theta) partials.

        Cartesian in the MPCC modes; arc/normal Frenet in the baseline, where
        the lateral offset is the contouring displacement at theta.
        """
        n_obs = len(self.obstacles)
        N = self.N
        r_veh = self.cfg.vehicle.r_veh
        if n_obs == 0:
            z = np.zeros((N, 0))
            return z, (z, z, z)
        if self.mode is not Mode.FRENET_BASELINE:
            dx = Xs[:, IX_X, None] - self._obs_xy[None, :, 0]
            dy = Xs[:, IX_Y, None] - self._obs_xy[None, :, 1]
            rho = np.hypot(dx, dy)
            D = rho - self._obs_r[None, :] - r_veh
            if not want_grad:
                return D, None
            rho_s = np.maximum(rho, 1e-9)
            return D, (dx / rho_s, dy / rho_s, np.zeros_like(rho))

        e_con, _, g = tracking if tracking is not None else self._tracking_terms(Xs, want_grad)
        d_v = -e_con
        ds = Xs[:, IX_THETA, None] - self.obs_frenet[None, :, 0]
        dd = d_v[:, None] - self.obs_frenet[None, :, 1]
        rho = np.hypot(ds, dd)
        D = rho - self._obs_r[None, :] - r_veh
        if not want_grad:
            return D, None
        rho_s = np.maximum(rho, 1e-9)
        gX = dd / rho_s * (-g["con"][0])[:, None]
        gY = dd / rho_s * (-g["con"][1])[:, None]
        gT = ds / rho_s + dd / rho_s * (-g["con"][2])[:, None]
        return D, (gX, gY, gT)

    def objective(self, z: np.ndarray) -> float:
        return self._cost(z, want_grad=False)[0]

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self._cost(z, want_grad=True)[1]

    def _cost(self, z: np.ndarray, want_grad: bool):
        U, Xs = self.split(z)
        w = self.cfg.weights
        N = self.N
        gU = np.zeros((N, 3)) if want_grad else None
        gX = np.zeros((N, 9)) if want_grad else None

        e_con, e_lag, gt = self._tracking_terms(Xs, want_grad)
        if self.mode is Mode.FRENET_BASELINE:
            track_cost = w.q_con * e_con**2
        else:
            track_cost = w.q_con * e_con**2 + w.q_lag * e_lag**2

        sp_tot = np.hypot(Xs[:, IX_VX], Xs[:, IX_VY])
        e_vel = sp_tot - self.v_des

        cost = float(np.sum(track_cost) + w.q_vel * np.sum(e_vel**2)
                     + w.q_ddelta * np.sum(U[:, 0]**2) + w.q_dFx * np.sum(U[:, 1]**2)
                     + w.q_lambda * np.sum((U[:, 2] - self.lambda_ideal)**2))

        if want_grad:
            for name, q, e in (("con", w.q_con, e_con), ("lag", w.q_lag, e_lag)):
                if self.mode is Mode.FRENET_BASELINE and name == "lag":
                    continue
                cX, cY, cT = gt[name]
                gX[:, IX_X] += 2.0 * q * e * cX
                gX[:, IX_Y] += 2.0 * q * e * cY
                gX[:, IX_THETA] += 2.0 * q * e * cT
            sp_safe = np.maximum(sp_tot, 1e-9)
            gX[:, IX_VX] += 2.0 * w.q_vel * e_vel * Xs[:, IX_VX] / sp_safe
            gX[:, IX_VY] += 2.0 * w.q_vel * e_vel * Xs[:, IX_VY] / sp_safe
            gU[:, 0] += 2.0 * w.q_ddelta * U[:, 0]
            gU[:, 1] += 2.0 * w.q_dFx * U[:, 1]
            gU[:, 2] += 2.0 * w.q_lambda * (U[:, 2] - self.lambda_ideal)

        # obstacle penalties (weights frozen at assembly)
        if len(self.obstacles) and np.any(self.w_obs > 0.0):
            D, gD = self._obstacle_distances(
                Xs, want_grad, tracking=(e_con, e_lag, gt))
            e = np.minimum(D - w.D_sft_obs, 0.0)
            cost += float(np.sum(self.w_obs * e * e))
            if want_grad:
                coef = 2.0 * self.w_obs * e
                gX[:, IX_X] += np.sum(coef * gD[0], axis=1)
                gX[:, IX_Y] += np.sum(coef * gD[1], axis=1)
                gX[:, IX_THETA] += np.sum(coef * gD[2], axis=1)

        # edge penalties
        if np.any(self.w_edge > 0.0):
            e_c, ge, _ = self._edge_offsets(Xs, want_grad)
            half = 0.5 * self.track.width
            r_veh = self.cfg.vehicle.r_veh
            D_L = half + e_c - r_veh
            D_R = half - e_c - r_veh
            e_L = np.minimum(D_L - w.D_sft_edge, 0.0)
            e_R = np.minimum(D_R - w.D_sft_edge, 0.0)
            cost += float(np.sum(self.w_edge[:, 0] * e_L**2)
                          + np.sum(self.w_edge[:, 1] * e_R**2))
            if want_grad:
                coef = 2.0 * (self.w_edge[:, 0] * e_L - self.w_edge[:, 1] * e_R)
                gX[:, IX_X] += coef * ge[0]
                gX[:, IX_Y] += coef * ge[1]
                gX[:, IX_THETA] += coef * ge[2]

        if not want_grad:
            return cost, None
        return cost, self.join(gU, gX)

    def cost_hessian(self, z: np.ndarray) -> np.ndarray:
        """Gauss-Newton Hessian of the cost: sum of 2*q*J'J per penalty term.

        Positive semidefinite by construction; used to seed the solver's
        quasi-Newton matrix so the first step already reflects the quadratic
        penalty structure.

        One-sided barrier terms (obstacle and track-edge) contribute their
        curvature wherever their frozen weight is nonzero, not only at
        iterates currently inside the soft band.  The optimum rides the band
        edge, and a model that loses the curvature on the outside proposes
        steps that cross the kink and eat unmodelled quadratic cost, forcing
        the line search into permanent backtracking.
        """
        U, Xs = self.split(z)
        w = self.cfg.weights
        N = self.N
        Hx = np.zeros((N, 9, 9))
        Hu = np.zeros((N, 3, 3))
        Hu[:, 0, 0] = 2.0 * w.q_ddelta
        Hu[:, 1, 1] = 2.0 * w.q_dFx
        Hu[:, 2, 2] = 2.0 * w.q_lambda

        pos = (IX_X, IX_Y, IX_THETA)

        def add_pos_outer(coef, rows):
            # coef (N,), rows tuple of three (N,) gradient components
            J = np.stack(rows, axis=1)
            outer = coef[:, None, None] * np.einsum("ki,kj->kij", J, J)
            for a in range(3):
                for b in range(3):
                    Hx[:, pos[a], pos[b]] += outer[:, a, b]

        e_con, e_lag, gt = self._tracking_terms(Xs, want_grad=True)
        add_pos_outer(np.full(N, 2.0 * w.q_con), gt["con"])
        if self.mode is not Mode.FRENET_BASELINE:
            add_pos_outer(np.full(N, 2.0 * w.q_lag), gt["lag"])

        sp = np.hypot(Xs[:, IX_VX], Xs[:, IX_VY])
        sps = np.maximum(sp, 1e-9)
        jv = np.stack([Xs[:, IX_VX] / sps, Xs[:, IX_VY] / sps], axis=1)
        ov = 2.0 * w.q_vel * np.einsum("ki,kj->kij", jv, jv)
        vel = (IX_VX, IX_VY)
        for a in range(2):
            for b in range(2):
                Hx[:, vel[a], vel[b]] += ov[:, a, b]

        if len(self.obstacles) and np.any(self.w_obs > 0.0):
            _, gD = self._obstacle_distances(Xs, want_grad=True,
                                             tracking=(e_con, e_lag, gt))
            for j in range(len(self.obstacles)):
                add_pos_outer(2.0 * self.w_obs[:, j],
                              (gD[0][:, j], gD[1][:, j], gD[2][:, j]))

        if np.any(self.w_edge > 0.0):
            _, ge, _ = self._edge_offsets(Xs, want_grad=True)
            coef = 2.0 * (self.w_edge[:, 0] + self.w_edge[:, 1])
            add_pos_outer(coef, ge)

        H = np.zeros((self.n, self.n))
        for k in range(N):
            iu = slice(3 * k, 3 * k + 3)
            ix = slice(3 * N + 9 * k, 3 * N + 9 * k + 9)
            H[iu, iu] = Hu[k]
            H[ix, ix] = Hx[k]
        return H

    # -- dynamics defects -------------------------------------------------------

    def defects(self, z: np.ndarray) -> np.ndarray:
        """x_{k+1} - F(x_k, u_k) stacked, shape (9N,)."""
        U, Xs = self.split(z)
        prev = self._prev_states(Xs)
        pred = rk2_array(prev, U, self.cfg.vehicle, self.cfg.tyres, self.cfg.Ts)
        return (Xs - pred).ravel()

    def dyn_jacobians(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """RK2 Jacobian blocks (Ad (N,9,9), Bd (N,9,3)) at the defect points."""
        U, Xs = self.split(z)
        prev = self._prev_states(Xs)
        return rk2_jacobians(prev, U, self.cfg.vehicle, self.cfg.tyres, self.cfg.Ts)

    # -- stage inequality constraints ------------------------------------------

    def ineq(self, z: np.ndarray) -> np.ndarray:
        return self._ineq(z, want_jac=False)[0]

    def ineq_stage_jac(self, z: np.ndarray):
        return self._ineq(z, want_jac=True)

    def _ineq(self, z: np.ndarray, want_jac: bool):
        """Rows per stage: friction front, friction rear, track corridor."""
        U, Xs = self.split(z)
        veh, cfg = self.cfg.vehicle, self.cfg
        N = self.N
        Fx = Xs[:, IX_FX]
        lam = U[:, 2]
        Fxf, Fxr = split_longitudinal_force(Fx, lam, veh.lambda_d)
        braking = Fx <= 0.0
        cap_f = cfg.sf * veh.mu * self.Fzf
        cap_r = cfg.sf * veh.mu * self.Fzr

        e_c, ge, aux = self._edge_offsets(Xs, want_jac)
        dx, dy, dXc, dYc = aux
        half = 0.5 * self.track.width
        c_track = dx * dx + dy * dy - half * half

        c = np.empty(3 * N)
        c[0::3] = np.abs(Fxf) - cap_f
        c[1::3] = np.abs(Fxr) - cap_r
        c[2::3] = c_track
        if not want_jac:
            return c, None, None, None

        Jx = np.zeros((3 * N, 9))
        Ju = np.zeros((3 * N, 3))
        sgn_f = np.sign(Fxf)
        sgn_r = np.sign(Fxr)
        dFxf_dFx = np.where(braking, lam, veh.lambda_d)
        dFxr_dFx = np.where(braking, 1.0 - lam, 1.0 - veh.lambda_d)
        dFxf_dlb = np.where(braking, Fx, 0.0)
        dFxr_dlb = np.where(braking, -Fx, 0.0)
        Jx[0::3, IX_FX] = sgn_f * dFxf_dFx
        Ju[0::3, 2] = sgn_f * dFxf_dlb
        Jx[1::3, IX_FX] = sgn_r * dFxr_dFx
        Ju[1::3, 2] = sgn_r * dFxr_dlb
        Jx[2::3, IX_X] = 2.0 * dx
        Jx[2::3, IX_Y] = 2.0 * dy
        Jx[2::3, IX_THETA] = -2.0 * (dx * dXc + dy * dYc)
        stage = np.repeat(np.arange(N), 3)
        return c, Jx, Ju, stage


def _rollout_states(x0: np.ndarray, U: np.ndarray, cfg: MpccConfig) -> np.ndarray:
    """Integrate the input plan from x0; the returned states are defect-free."""
    Xs = np.empty((len(U), STATE_DIM))
    x = x0
    for k in range(len(U)):
        x = rk2_array(x, U[k], cfg.vehicle, cfg.tyres, cfg.Ts)
        Xs[k] = x
    return Xs


def _cold_rollout(x0: np.ndarray, cfg: MpccConfig, lambda_ideal: float):
    """Coasting rollout (zero rates, ideal repartition) as cold initial guess."""
    U = np.tile([0.0, 0.0, lambda_ideal], (cfg.N, 1))
    return U, _rollout_states(x0, U, cfg)


def assemble(x0, path: ReferencePath, obstacles: list[Obstacle], track: TrackSpec,
             cfg: MpccConfig, warm=None) -> MpccProblem:
    """Build the horizon NLP for the measured state x0.

    ``warm`` is the previous HorizonSolution (or None).  The initial guess is
    the one-stage-shifted warm trajectory with the last stage duplicated, or a
    coasting rollout when cold.  Schedule weights are evaluated on that guess
    and frozen.  In the baseline mode the initial progress is re-anchored by
    projecting x0 onto the path and obstacles get per-solve Frenet coordinates.
    """
    x0 = x0.as_array() if isinstance(x0, VehicleState) else np.asarray(x0, dtype=float)
    if x0.shape != (STATE_DIM,) or not np.all(np.isfinite(x0)):
        raise InvalidStateError("initial state must be a finite 9-vector")
    if x0[IX_VX] < LOW_SPEED_FLOOR:
        raise InvalidStateError(f"initial vx below the {LOW_SPEED_FLOOR} m/s floor")

    veh = cfg.vehicle
    Fzf, Fzr = static_axle_loads(veh)
    Fxf0, Fxr0 = split_longitudinal_force(x0[IX_FX], ideal_brake_repartition(Fzf, Fzr),
                                          veh.lambda_d)
    for fx_axle, fz in ((Fxf0, Fzf), (Fxr0, Fzr)):
        if abs(fx_axle) > cfg.sf * veh.mu * fz * (1.0 + INIT_FRICTION_SLACK):
            raise InfeasibleInitialStateError(
                "initial longitudinal force violates the friction bound beyond slack")

    if cfg.mode is Mode.FRENET_BASELINE:
        s0, _ = project_to_path(float(x0[IX_X]), float(x0[IX_Y]), path)
        x0 = x0.copy()
        x0[IX_THETA] = s0
        obs_frenet = np.array(
            [project_to_path(o.X, o.Y, path) for o in obstacles]).reshape(-1, 2)
    else:
        obs_frenet = None

    v_cover = max(float(x0[IX_VX]), path.v_des)
    if x0[IX_THETA] + cfg.N * cfg.Ts * v_cover > path.total_length + 1e-9:
        raise PathTooShortError(
            f"path ends at {path.total_length:.1f} m, horizon needs "
            f"{x0[IX_THETA] + cfg.N * cfg.Ts * v_cover:.1f} m")

    lam_ideal = ideal_brake_repartition(Fzf, Fzr)
    if warm is not None:
        # Shift the previous plan one stage with the last stage duplicated.
        # The state tail is kept verbatim rather than re-rolled from x0: the
        # previous plan is near-optimal and mutually consistent, whereas an
        # open-loop rollout of 50 stages at the handling limit amplifies the
        # one-step model-vs-plant gap into a diverged guess (and the schedule
        # weights frozen from it).  The lone stage-0 defect left behind is
        # exactly what the equality-constrained step is built to absorb.  The
        # appended final state integrates the duplicated input so the tail
        # does not introduce a second defect.
        U = np.vstack([warm.inputs[1:], warm.inputs[-1:]])
        x_tail = rk2_array(warm.states[-1], warm.inputs[-1],
                           cfg.vehicle, cfg.tyres, cfg.Ts)
        Xs = np.vstack([warm.states[1:], x_tail[None, :]])
    else:
        U, Xs = _cold_rollout(x0, cfg, lam_ideal)

    problem = MpccProblem(x0, path, obstacles, track, cfg,
                          np.zeros(cfg.N * 12), np.zeros((cfg.N, len(obstacles))),
                          np.zeros((cfg.N, 2)), obs_frenet)
    z0 = np.clip(problem.join(U, Xs), problem.lb, problem.ub)
    problem.z0 = z0

    # schedule weights from the (clipped) guess trajectory, frozen for this solve
    w = cfg.weights
    _, Xs0 = problem.split(z0)
    if cfg.mode is Mode.MPCC_NO_CA:
        pass  # all prioritisation weights stay zero
    else:
        sched = step_weight if cfg.mode is Mode.FRENET_BASELINE else v2o_weight
        if len(obstacles):
            D, _ = problem._obstacle_distances(Xs0, want_grad=False)
            problem.w_obs = sched(D, w.P_k_obs, w.D_sft_obs)
        e_c, _, _ = problem._edge_offsets(Xs0, want_grad=False)
        half = 0.5 * track.width
        D_L = half + e_c - veh.r_veh
        D_R = half - e_c - veh.r_veh
        problem.w_edge = np.column_stack([
            sched(D_L, w.P_k_edge, w.D_sft_edge),
            sched(D_R, w.P_k_edge, w.D_sft_edge),
        ])
    return problem
