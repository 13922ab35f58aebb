"""Deterministic closed-loop plant simulation.

The plant shares the single-track structure of the prediction model but runs
at a finer integration step (RK4 substeps), drives the steering and
longitudinal-force channels through second-order actuator filters, and may
carry deliberately mismatched parameters (friction, mass) to exercise
robustness of the controller.
"""

from __future__ import annotations

import dataclasses
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import InvalidStateError
from .path import (
    ReferencePath,
    TrackSpec,
    contouring_lag_errors,
    v2e_distance,
    v2o_distance_cartesian,
)
from .problem import MpccConfig, assemble
from .solver import HorizonSolution, solve
from .vehicle import (
    IX_DELTA,
    IX_FX,
    IX_R,
    IX_THETA,
    IX_VX,
    IX_VY,
    IX_X,
    IX_Y,
    STATE_DIM,
    TyreParams,
    VehicleParams,
    dynamics_array,
)

FLOAT_FMT = "%.17g"
DIVERGENCE_BETA = math.radians(45.0)

#: how many steps a previously converged plan stays preferable to a
#: non-converged solve's best-effort iterate
PLAN_FRESHNESS = 3


# ---------------------------------------------------------------------------
# actuators


@dataclass(frozen=True)
class ActuatorModel:
    """Second-order unity-gain channel: natural frequency (rad/s), damping."""

    natural_frequency: float
    damping_ratio: float

    def __post_init__(self) -> None:
        if not self.natural_frequency > 0.0:
            raise ValueError("natural_frequency must be positive")
        if not 0.0 < self.damping_ratio <= 2.0:
            raise ValueError("damping_ratio must lie in (0, 2]")


class SecondOrderActuator:
    """Stateful discrete filter y'' = w^2 (u - y) - 2 z w y'.

    The step uses the exact zero-order-hold discretisation of the continuous
    system, so the response is sample-rate independent.
    """

    def __init__(self, model: ActuatorModel, initial: float = 0.0):
        self.model = model
        self.y = float(initial)
        self.dy = 0.0
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def reset(self, value: float) -> None:
        self.y = float(value)
        self.dy = 0.0

    def _discretise(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        try:
            return self._cache[dt]
        except KeyError:
            w, z = self.model.natural_frequency, self.model.damping_ratio
            M = np.array([[0.0, 1.0, 0.0],
                          [-w * w, -2.0 * z * w, w * w],
                          [0.0, 0.0, 0.0]])
            Phi = expm(M * dt)
            Ad, Bd = Phi[:2, :2].copy(), Phi[:2, 2].copy()
            self._cache[dt] = (Ad, Bd)
            return Ad, Bd

    def step(self, command: float, dt: float) -> float:
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        Ad, Bd = self._discretise(dt)
        self.y, self.dy = Ad[0, 0] * self.y + Ad[0, 1] * self.dy + Bd[0] * command, \
            Ad[1, 0] * self.y + Ad[1, 1] * self.dy + Bd[1] * command
        return self.y


def actuator_step(actuator: SecondOrderActuator, command: float, Ts_sub: float) -> float:
    """Advance one substep toward ``command`` and return the achieved value."""
    return actuator.step(command, Ts_sub)


# ---------------------------------------------------------------------------
# plant


@dataclass(frozen=True)
class PlantConfig:
    """Plant-side parameter set; may differ from the controller's."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tyres: TyreParams = field(default_factory=TyreParams)
    steering_actuator: ActuatorModel = ActuatorModel(25.0, 0.7)
    force_actuator: ActuatorModel = ActuatorModel(15.0, 0.9)
    substeps: int = 50

    def __post_init__(self) -> None:
        if self.substeps < 10:
            raise ValueError("substeps must be at least 10")

    @classmethod
    def mismatched_from(cls, vehicle: VehicleParams, tyres: TyreParams,
                        mu_scale: float = 0.95, mass_scale: float = 1.05,
                        **kw) -> "PlantConfig":
        """Plant with scaled friction and inertia relative to the controller."""
        plant_veh = dataclasses.replace(
            vehicle, mu=vehicle.mu * mu_scale, m=vehicle.m * mass_scale,
            Izz=vehicle.Izz * mass_scale)
        return cls(vehicle=plant_veh, tyres=tyres, **kw)


class PlantSim:
    """One vehicle plant: actuator filters plus RK4 integration at substeps."""

    def __init__(self, cfg: PlantConfig, Ts: float, ctrl_cfg: MpccConfig,
                 x0: np.ndarray):
        if not Ts > 0.0:
            raise ValueError("Ts must be positive")
        self.cfg = cfg
        self.Ts = Ts
        self.bounds = ctrl_cfg.bounds
        self.fx_lo, self.fx_hi = ctrl_cfg.bounds.resolve(ctrl_cfg.vehicle, ctrl_cfg.sf)
        self.steer = SecondOrderActuator(cfg.steering_actuator, x0[IX_DELTA])
        self.force = SecondOrderActuator(cfg.force_actuator, x0[IX_FX])

    def clip_command(self, u: np.ndarray) -> np.ndarray:
        b = self.bounds
        return np.array([
            float(np.clip(u[0], -b.ddelta_max, b.ddelta_max)),
            float(np.clip(u[1], -b.dFx_max, b.dFx_max)),
            float(np.clip(u[2], 0.0, 1.0)),
        ])

    def step(self, x: np.ndarray, u_cmd: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,) or not np.all(np.isfinite(x)):
            raise InvalidStateError("plant state must be a finite 9-vector")
        u = self.clip_command(np.asarray(u_cmd, dtype=float))
        dt = self.Ts / self.cfg.substeps
        delta0, Fx0 = x[IX_DELTA], x[IX_FX]
        u_hold = np.array([0.0, 0.0, u[2]])  # rates realised by the actuators
        y = x.copy()
        for i in range(self.cfg.substeps):
            t_mid = (i + 0.5) * dt
            d_cmd = float(np.clip(delta0 + u[0] * t_mid,
                                  -self.bounds.delta_max, self.bounds.delta_max))
            f_cmd = float(np.clip(Fx0 + u[1] * t_mid, self.fx_lo, self.fx_hi))
            y[IX_DELTA] = self.steer.step(d_cmd, dt)
            y[IX_FX] = self.force.step(f_cmd, dt)
            y = _rk4(y, u_hold, self.cfg.vehicle, self.cfg.tyres, dt)
        return y


def _rk4(x, u, veh, tyres, dt):
    k1 = dynamics_array(x, u, veh, tyres)
    k2 = dynamics_array(x + 0.5 * dt * k1, u, veh, tyres)
    k3 = dynamics_array(x + 0.5 * dt * k2, u, veh, tyres)
    k4 = dynamics_array(x + dt * k3, u, veh, tyres)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def closed_loop_step(x: np.ndarray, controller_output: np.ndarray,
                     plant: PlantSim) -> np.ndarray:
    """Apply the first planned input through the actuators over one Ts."""
    return plant.step(x, controller_output)


# ---------------------------------------------------------------------------
# logging


@dataclass
class StepRecord:
    t: float
    state: np.ndarray
    u_cmd: np.ndarray
    delta_achieved: float
    Fx_achieved: float
    e_con: float
    e_lag: float
    d_v2o: np.ndarray
    d_v2e_left: float
    d_v2e_right: float
    beta: float
    ax: float
    ay: float
    solver_status: str
    solver_iterations: int
    solver_kkt: float
    solver_violation: float


class SimLog:
    """Per-control-step history of one closed-loop run."""

    STATE_COLS = ("X", "Y", "psi", "vx", "vy", "r", "theta", "delta", "Fx")

    def __init__(self, n_obstacles: int, Ts: float):
        self.n_obstacles = n_obstacles
        self.Ts = Ts
        self.records: list[StepRecord] = []
        self.solve_times: list[float] = []
        self.end_reason = "completed"

    @property
    def diverged(self) -> bool:
        return self.end_reason == "diverged"

    def append(self, rec: StepRecord, solve_time: float) -> None:
        self.records.append(rec)
        self.solve_times.append(solve_time)

    def columns(self) -> list[str]:
        cols = ["t", *self.STATE_COLS, "cmd_ddelta", "cmd_dFx", "cmd_lambda",
                "ach_delta", "ach_Fx", "e_con", "e_lag"]
        cols += [f"d_v2o_{j + 1}" for j in range(self.n_obstacles)]
        cols += ["d_v2e_left", "d_v2e_right", "beta", "ax", "ay",
                 "solver_status", "solver_iterations", "solver_kkt",
                 "solver_violation"]
        return cols

    def row_values(self, rec: StepRecord) -> list:
        return [rec.t, *rec.state, *rec.u_cmd, rec.delta_achieved,
                rec.Fx_achieved, rec.e_con, rec.e_lag, *rec.d_v2o,
                rec.d_v2e_left, rec.d_v2e_right, rec.beta, rec.ax, rec.ay,
                rec.solver_status, rec.solver_iterations, rec.solver_kkt,
                rec.solver_violation]

    def to_csv(self, fileobj: io.TextIOBase) -> None:
        """Write the documented column set; no wall-clock data is included."""
        fileobj.write(",".join(self.columns()) + "\n")
        for rec in self.records:
            cells = []
            for v in self.row_values(rec):
                if isinstance(v, str):
                    cells.append(v)
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(FLOAT_FMT % float(v))
            fileobj.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# closed loop


def _body_accelerations(x, u_hold, veh, tyres):
    f = dynamics_array(x, u_hold, veh, tyres)
    ax = f[IX_VX] - x[IX_R] * x[IX_VY]
    ay = f[IX_VY] + x[IX_R] * x[IX_VX]
    return float(ax), float(ay)


def run_scenario(scenario, ctrl_cfg: MpccConfig, plant_cfg: PlantConfig,
                 duration: float | None = None) -> SimLog:
    """Run the measure -> assemble -> solve -> apply loop until the path ends,
    the optional duration elapses, or the vehicle diverges.

    Non-converged solves are handled in two tiers: for a short streak the
    previously converged plan is replayed, shifted one further stage per
    step (its inputs are near-optimal and fresher than a half-finished
    iterate); once the streak outlives the plan's freshness, the solver's
    best-effort iterate takes over (when the corridor is momentarily
    unreachable, its least-violating plan is the best action available).
    Divergence (|beta| > 45 deg or off-track beyond twice the track width)
    ends the run with the log intact.
    """
    from .errors import InfeasibleInitialStateError, PathTooShortError

    path: ReferencePath = scenario.desired_path
    track: TrackSpec = scenario.track
    obstacles = list(scenario.obstacles)
    Ts = ctrl_cfg.Ts
    x = np.asarray(scenario.initial_state, dtype=float).copy()
    r_veh = ctrl_cfg.vehicle.r_veh

    log = SimLog(len(obstacles), Ts)
    plant = PlantSim(plant_cfg, Ts, ctrl_cfg, x)
    max_steps = int(math.ceil(duration / Ts)) if duration is not None else 10**6
    prev: HorizonSolution | None = None
    plan: HorizonSolution | None = None
    plan_idx = 0

    for k in range(max_steps):
        try:
            prob = assemble(x, path, obstacles, track, ctrl_cfg, warm=prev)
        except PathTooShortError:
            log.end_reason = "path_end"
            break
        except (InvalidStateError, InfeasibleInitialStateError):
            # the plant drove itself somewhere the controller cannot start
            # from (speed collapse, friction overload); keep the log
            log.end_reason = "diverged"
            break
        t0 = time.perf_counter()
        res = solve(prob, ctrl_cfg.solver, warm=prev)
        solve_time = time.perf_counter() - t0

        if res.status in ("converged", "max_iter"):
            plan, plan_idx = res, 0
            prev = res
            u = res.inputs[0]
        elif plan is not None and plan_idx < PLAN_FRESHNESS:
            plan_idx += 1
            u = plan.inputs[min(plan_idx, plan.inputs.shape[0] - 1)]
        elif res.inputs is not None and res.status in ("stalled", "time_out"):
            plan, plan_idx = res, 0
            prev = res
            u = res.inputs[0]
        elif plan is not None:
            plan_idx += 1
            u = plan.inputs[min(plan_idx, plan.inputs.shape[0] - 1)]
        else:
            u = np.array([0.0, 0.0, prob.lambda_ideal])

        u = plant.clip_command(u)
        x_next = plant.step(x, u)

        theta_log = prob.x0[IX_THETA]  # re-anchored in the baseline mode
        e_con, e_lag = contouring_lag_errors(x[IX_X], x[IX_Y], theta_log, path)
        d_v2o = np.array([v2o_distance_cartesian(x[IX_X], x[IX_Y], o, r_veh)
                          for o in obstacles])
        d_left, d_right = v2e_distance(x[IX_X], x[IX_Y], track, r_veh)
        beta = math.atan(x[IX_VY] / x[IX_VX])
        ax, ay = _body_accelerations(x, np.array([0.0, 0.0, u[2]]),
                                     plant_cfg.vehicle, plant_cfg.tyres)
        log.append(StepRecord(
            t=k * Ts, state=x.copy(), u_cmd=u,
            delta_achieved=float(x_next[IX_DELTA]),
            Fx_achieved=float(x_next[IX_FX]),
            e_con=float(e_con), e_lag=float(e_lag), d_v2o=d_v2o,
            d_v2e_left=float(d_left), d_v2e_right=float(d_right),
            beta=float(beta), ax=ax, ay=ay,
            solver_status=res.status, solver_iterations=res.iterations,
            solver_kkt=float(res.kkt_residual),
            solver_violation=float(res.constraint_violation),
        ), solve_time)

        dl_n, dr_n = v2e_distance(x_next[IX_X], x_next[IX_Y], track, r_veh)
        offset_next = abs(0.5 * (dr_n - dl_n))  # |d| recovered from the pair
        beta_next = math.atan(x_next[IX_VY] / max(x_next[IX_VX], 1e-9))
        if abs(beta_next) > DIVERGENCE_BETA or offset_next > 2.0 * track.width:
            log.end_reason = "diverged"
            break
        x = x_next
    return log
