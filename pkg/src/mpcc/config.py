"""Run configuration: one JSON file describing a complete closed-loop run.

The file carries six blocks — ``vehicle``, ``tyre``, ``weights``, ``solver``,
``actuator`` and ``scenario`` — plus a ``schema_version``.  Every tunable in
the library has its default mirrored here: :func:`default_config_dict` builds
the canonical dictionary straight from the dataclass defaults, and the
committed ``configs/double_lane_change.json`` is exactly that dictionary
serialised, so file and code cannot drift apart silently.

The controller mode (``mpcc-ca`` / ``mpcc-no-ca`` / ``frenet-baseline``) is
deliberately *not* part of the file: comparisons run several modes off one
config, so the mode arrives as a CLI flag.
"""

from __future__ import annotations

import dataclasses
import inspect
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .problem import Bounds, Mode, MpccConfig, MpccWeights
from .scenarios import Scenario, build_double_lane_change
from .sim import ActuatorModel, PlantConfig
from .solver import SolverSettings
from .tyre import TyreParams
from .vehicle import VehicleParams

SCHEMA_VERSION = 1

#: scenario-block keys forwarded to the double-lane-change builder
_SCENARIO_KEYS = ("road_length", "lane_width", "obstacle_radius",
                  "obstacle_stations", "transition_length", "v_des", "start_s")


@dataclass(frozen=True)
class MismatchSpec:
    """Controller-vs-plant parameter offsets applied to the simulation plant."""

    enabled: bool = True
    mu_scale: float = 0.95
    mass_scale: float = 1.05

    def __post_init__(self) -> None:
        if self.mu_scale <= 0.0 or self.mass_scale <= 0.0:
            raise ValueError("mismatch scales must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a config file, ready to instantiate a run."""

    vehicle: VehicleParams
    tyres: TyreParams
    weights: MpccWeights
    bounds: Bounds
    solver: SolverSettings
    N: int
    Ts: float
    sf: float
    steering_actuator: ActuatorModel
    force_actuator: ActuatorModel
    substeps: int
    mismatch: MismatchSpec
    scenario_kind: str
    scenario_params: dict

    def controller_config(self, mode: Mode = Mode.MPCC_CA) -> MpccConfig:
        return MpccConfig(vehicle=self.vehicle, tyres=self.tyres, N=self.N,
                          Ts=self.Ts, sf=self.sf, weights=self.weights,
                          bounds=self.bounds, mode=mode, solver=self.solver)

    def plant_config(self) -> PlantConfig:
        kw = dict(steering_actuator=self.steering_actuator,
                  force_actuator=self.force_actuator, substeps=self.substeps)
        if self.mismatch.enabled:
            return PlantConfig.mismatched_from(
                self.vehicle, self.tyres, mu_scale=self.mismatch.mu_scale,
                mass_scale=self.mismatch.mass_scale, **kw)
        return PlantConfig(vehicle=self.vehicle, tyres=self.tyres, **kw)

    def build_scenario(self) -> Scenario:
        params = dict(self.scenario_params)
        params["obstacle_stations"] = tuple(params["obstacle_stations"])
        return build_double_lane_change(
            r_veh=self.vehicle.r_veh,
            D_sft_obs=self.weights.D_sft_obs,
            **params)


def default_config_dict() -> dict:
    """Canonical config dictionary assembled from the library defaults."""
    solver_block = {
        "N": MpccConfig.__dataclass_fields__["N"].default,
        "Ts": MpccConfig.__dataclass_fields__["Ts"].default,
        "sf": MpccConfig.__dataclass_fields__["sf"].default,
        "bounds": dataclasses.asdict(Bounds()),
        "settings": dataclasses.asdict(SolverSettings()),
    }
    sig = inspect.signature(build_double_lane_change)
    scenario_defaults = {k: sig.parameters[k].default for k in _SCENARIO_KEYS}
    scenario_defaults["obstacle_stations"] = list(
        scenario_defaults["obstacle_stations"])
    return {
        "schema_version": SCHEMA_VERSION,
        "vehicle": dataclasses.asdict(VehicleParams()),
        "tyre": dataclasses.asdict(TyreParams()),
        "weights": dataclasses.asdict(MpccWeights()),
        "solver": solver_block,
        "actuator": {
            "steering": dataclasses.asdict(PlantConfig().steering_actuator),
            "force": dataclasses.asdict(PlantConfig().force_actuator),
            "substeps": PlantConfig().substeps,
            "mismatch": dataclasses.asdict(MismatchSpec()),
        },
        "scenario": {"kind": "double_lane_change", **scenario_defaults},
    }


def default_config_json() -> str:
    """The committed default config file's exact text."""
    return json.dumps(default_config_dict(), indent=2) + "\n"


def _build(cls, block: dict, where: str):
    """Instantiate a dataclass from a JSON block with strict key checking."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(block) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {', '.join(unknown)}")
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}' block: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    """Validate a parsed config dictionary into a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    expected = {"schema_version", "vehicle", "tyre", "weights", "solver",
                "actuator", "scenario"}
    unknown = sorted(set(raw) - expected)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    missing = sorted(expected - set(raw))
    if missing:
        raise ConfigError(f"missing block(s): {', '.join(missing)}")

    vehicle = _build(VehicleParams, raw["vehicle"], "vehicle")
    tyres = _build(TyreParams, raw["tyre"], "tyre")
    weights = _build(MpccWeights, raw["weights"], "weights")

    solver_block = dict(raw["solver"])
    bounds = _build(Bounds, solver_block.pop("bounds", {}), "solver.bounds")
    settings = _build(SolverSettings, solver_block.pop("settings", {}),
                      "solver.settings")
    unknown = sorted(set(solver_block) - {"N", "Ts", "sf"})
    if unknown:
        raise ConfigError(f"unknown key(s) in 'solver': {', '.join(unknown)}")
    try:
        N = int(solver_block.get("N", 50))
        Ts = float(solver_block.get("Ts", 0.05))
        sf = float(solver_block.get("sf", 0.95))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'solver' block: {exc}") from exc

    act = dict(raw["actuator"])
    steering = _build(ActuatorModel, act.pop("steering", {}), "actuator.steering")
    force = _build(ActuatorModel, act.pop("force", {}), "actuator.force")
    mismatch = _build(MismatchSpec, act.pop("mismatch", {}), "actuator.mismatch")
    substeps = act.pop("substeps", 50)
    if act:
        raise ConfigError(f"unknown key(s) in 'actuator': {', '.join(sorted(act))}")
    if not isinstance(substeps, int) or substeps < 10:
        raise ConfigError("actuator.substeps must be an integer >= 10")

    scen = dict(raw["scenario"])
    kind = scen.pop("kind", None)
    if kind != "double_lane_change":
        raise ConfigError(f"unsupported scenario kind {kind!r}")
    unknown = sorted(set(scen) - set(_SCENARIO_KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s) in 'scenario': {', '.join(unknown)}")
    params = {k: scen[k] for k in _SCENARIO_KEYS if k in scen}
    stations = params.get("obstacle_stations")
    if stations is not None and (not isinstance(stations, (list, tuple))
                                 or len(stations) != 2):
        raise ConfigError("scenario.obstacle_stations must be a 2-element list")

    cfg = RunConfig(vehicle=vehicle, tyres=tyres, weights=weights,
                    bounds=bounds, solver=settings, N=N, Ts=Ts, sf=sf,
                    steering_actuator=steering, force_actuator=force,
                    substeps=substeps, mismatch=mismatch,
                    scenario_kind=kind, scenario_params=params)
    try:
        cfg.controller_config()  # surfaces cross-field violations immediately
    except ValueError as exc:
        raise ConfigError(f"inconsistent configuration: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON config file.

    Raises :class:`ConfigError` for a missing/unreadable file, malformed
    JSON, unknown keys, or values the library rejects.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
