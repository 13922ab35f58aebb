"""Scenario construction and post-run metric extraction.

Provides the double-lane-change test scenario (two staggered obstacles in
opposite lanes of a straight road), the circular study comparing path-frame
and Cartesian obstacle distances, and the aggregation of a simulation log
into summary metrics.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGeometryError
from .path import (
    Obstacle,
    ReferencePath,
    TrackSpec,
    circle_path,
    path_from_dense_xy,
    project_to_path,
    straight_path,
)
from .vehicle import IX_THETA, IX_VX, IX_X, IX_Y

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    """A track, the desired path through it, obstacles, and the start state."""

    track: TrackSpec
    desired_path: ReferencePath
    obstacles: list[Obstacle]
    initial_state: np.ndarray
    v_des: float

    def __post_init__(self) -> None:
        x0 = np.asarray(self.initial_state, dtype=float)
        if x0.shape != (9,):
            raise InvalidGeometryError("initial state must be a 9-vector")
        half = 0.5 * self.track.width
        _, d0 = project_to_path(float(x0[IX_X]), float(x0[IX_Y]),
                                self.track.centerline)
        if abs(d0) > half:
            raise InvalidGeometryError("initial state lies off the track")
        for o in self.obstacles:
            _, d_o = project_to_path(o.X, o.Y, self.track.centerline)
            if abs(d_o) + o.radius > half + 1e-9:
                raise InvalidGeometryError(
                    f"obstacle at ({o.X:.1f}, {o.Y:.1f}) leaves the track")
        for s in np.linspace(0.0, self.desired_path.total_length, 201):
            X, Y, _, _ = self.desired_path.lookup(float(s))
            _, d = project_to_path(float(X), float(Y), self.track.centerline)
            if abs(d) > half + 1e-9:
                raise InvalidGeometryError("desired path leaves the track")


def _smoothstep(sigma: np.ndarray) -> np.ndarray:
    """Quintic smooth-step: zero first and second derivatives at both ends."""
    t = np.clip(sigma, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def build_double_lane_change(
    road_length: float = 200.0,
    lane_width: float = 3.5,
    obstacle_radius: float = 1.0,
    obstacle_stations: tuple[float, float] = (90.0, 125.0),
    transition_length: float = 30.0,
    v_des: float = 17.0,
    start_s: float = 5.0,
    r_veh: float = 1.2,
    D_sft_obs: float = 1.5,
    a_y_max: float = 9.81,
) -> Scenario:
    """Two-lane road with one obstacle per lane, staggered, forcing a double
    lane change.

    The vehicle starts in the right lane; the desired path swaps lanes with a
    quintic transition centred on each obstacle station, so the coarse path
    itself only indicates the passing side and cuts through each obstacle's
    safety band.
    """
    half_lane = 0.5 * lane_width
    width = 2.0 * lane_width
    s1, s2 = obstacle_stations
    T = transition_length

    if not 0.0 < s1 < s2 < road_length:
        raise InvalidGeometryError("obstacle stations must be ordered inside the road")
    if s1 + 0.5 * T > s2 - 0.5 * T:
        raise InvalidGeometryError("lane transitions overlap; spread the obstacles")
    if s1 - 0.5 * T < start_s or s2 + 0.5 * T > road_length:
        raise InvalidGeometryError("lane transitions exceed the road")

    obstacles = [
        Obstacle(X=s1, Y=-half_lane, radius=obstacle_radius),
        Obstacle(X=s2, Y=+half_lane, radius=obstacle_radius),
    ]
    # widest free corridor beside each obstacle must admit the vehicle disc
    # plus the safety band
    corridor_min = 2.0 * r_veh + D_sft_obs
    for o in obstacles:
        gap_left = 0.5 * width - o.Y - o.radius
        gap_right = o.Y + 0.5 * width - o.radius
        if max(gap_left, gap_right) < corridor_min:
            raise InvalidGeometryError(
                f"no corridor of {corridor_min:.2f} m past the obstacle at "
                f"s = {o.X:.1f} m")

    s_dense = np.arange(0.0, road_length + 0.125, 0.125)
    y_dense = (-half_lane
               + lane_width * _smoothstep((s_dense - (s1 - 0.5 * T)) / T)
               - lane_width * _smoothstep((s_dense - (s2 - 0.5 * T)) / T))
    desired = path_from_dense_xy(s_dense, y_dense, spacing=0.5, v_des=v_des)

    kappa_max = a_y_max / (v_des * v_des)
    if np.max(np.abs(desired.kappa)) > kappa_max:
        raise InvalidGeometryError(
            "lane transition too sharp for the desired speed")

    track = TrackSpec(centerline=straight_path(road_length), width=width)
    theta0, _ = project_to_path(start_s, -half_lane, desired)
    x0 = np.zeros(9)
    x0[IX_X] = start_s
    x0[IX_Y] = -half_lane
    x0[IX_VX] = v_des
    x0[IX_THETA] = theta0
    return Scenario(track=track, desired_path=desired, obstacles=obstacles,
                    initial_state=x0, v_des=v_des)


# ---------------------------------------------------------------------------
# circular distance study


def build_circular_v2o_study(R: float, obstacle_offset: float = 0.0,
                             sweep_length: float = 25.0, step: float = 0.25,
                             r_obs: float = 1.0, r_veh: float = 1.2) -> np.ndarray:
    """Sweep a vehicle along a circular centreline toward an obstacle and
    tabulate both distance metrics.

    Returns rows (s_driven, D_frenet, D_cartesian) with the obstacle fixed at
    arc position ``sweep_length`` and normal offset ``obstacle_offset``; the
    vehicle traverses the centreline from 0 to the obstacle.
    """
    if R <= 0.0:
        raise ValueError("radius must be positive")
    if sweep_length <= 0.0 or step <= 0.0:
        raise ValueError("sweep_length and step must be positive")
    arc = circle_path(R, sweep_length + 1.0, spacing=min(0.1, step))
    s_obs = sweep_length
    Xo, Yo, psi_o, _ = arc.lookup(s_obs)
    # place the obstacle at a normal offset from the reference line
    Xo += -math.sin(psi_o) * obstacle_offset
    Yo += math.cos(psi_o) * obstacle_offset

    s_grid = np.arange(0.0, s_obs + 0.5 * step, step)
    s_grid[-1] = s_obs
    rows = np.empty((s_grid.size, 3))
    for i, s in enumerate(s_grid):
        X, Y, _, _ = arc.lookup(float(s))
        d_cart = math.hypot(X - Xo, Y - Yo) - r_obs - r_veh
        d_fren = math.hypot(s_obs - s, obstacle_offset) - r_obs - r_veh
        rows[i] = (s, d_fren, d_cart)
    return rows


def write_study_csv(table: np.ndarray, fileobj: io.TextIOBase) -> None:
    """Serialise a circular-study table with full float precision."""
    fileobj.write("s_driven,d_frenet,d_cartesian\n")
    for s, df, dc in table:
        fileobj.write(f"{FLOAT_FMT % s},{FLOAT_FMT % df},{FLOAT_FMT % dc}\n")


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    """Summary quantities of one closed-loop run."""

    min_d_v2o: list[float]
    min_d_v2e: float
    peak_beta_deg: float
    min_vx: float
    rms_e_con: float
    rms_e_vel: float
    collision: bool
    unsafe_obstacle: list[bool]
    unsafe_edge: bool
    end_reason: str = "completed"
    steps: int = 0

    def as_dict(self) -> dict:
        return {
            "min_d_v2o": [float(v) for v in self.min_d_v2o],
            "min_d_v2e": float(self.min_d_v2e),
            "peak_beta_deg": float(self.peak_beta_deg),
            "min_vx": float(self.min_vx),
            "rms_e_con": float(self.rms_e_con),
            "rms_e_vel": float(self.rms_e_vel),
            "collision": bool(self.collision),
            "unsafe_obstacle": [bool(v) for v in self.unsafe_obstacle],
            "unsafe_edge": bool(self.unsafe_edge),
            "end_reason": self.end_reason,
            "steps": int(self.steps),
        }


def compute_metrics(log, scenario: Scenario, D_sft_obs: float = 1.5,
                    D_sft_edge: float = 0.5) -> Metrics:
    """Extrema and RMS statistics of a run; sideslip reported in degrees."""
    if not log.records:
        raise ValueError("cannot compute metrics of an empty log")
    n_obs = len(scenario.obstacles)
    v_des = scenario.v_des

    d_v2o = np.array([rec.d_v2o for rec in log.records]).reshape(len(log.records),
                                                                 n_obs)
    d_v2e = np.array([[rec.d_v2e_left, rec.d_v2e_right] for rec in log.records])
    beta = np.array([rec.beta for rec in log.records])
    vx = np.array([rec.state[IX_VX] for rec in log.records])
    vy = np.array([rec.state[4] for rec in log.records])
    e_con = np.array([rec.e_con for rec in log.records])
    e_vel = np.hypot(vx, vy) - v_des

    min_per_obs = [float(d_v2o[:, j].min()) for j in range(n_obs)]
    min_edge = float(d_v2e.min()) if d_v2e.size else math.inf
    return Metrics(
        min_d_v2o=min_per_obs,
        min_d_v2e=min_edge,
        peak_beta_deg=float(np.degrees(np.abs(beta).max())),
        min_vx=float(vx.min()),
        rms_e_con=float(np.sqrt(np.mean(e_con**2))),
        rms_e_vel=float(np.sqrt(np.mean(e_vel**2))),
        collision=bool(min(min_per_obs, default=math.inf) < 0.0),
        unsafe_obstacle=[m < D_sft_obs for m in min_per_obs],
        unsafe_edge=bool(min_edge < D_sft_edge),
        end_reason=log.end_reason,
        steps=len(log.records),
    )
