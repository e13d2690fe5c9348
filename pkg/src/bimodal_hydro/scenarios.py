"""Scenario definitions and the built-in scenario files."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .config import SCHEMA_VERSION, _flatten, parse_override, tomllib
from .control import SCRIPTS, ControlMode, make_script
from .dynamics import ContinuousState
from .params import ActuatorParams, ConfigError

BUILTIN = ("gait", "drop", "swing-only", "lift-only")


@dataclass(frozen=True)
class ContactSpec:
    """How and when the load engages the output piston.

    Contact is event-keyed on ``position`` (output crossing it while
    extending) or time-keyed on ``time``. At contact the output piston takes
    the load velocity divided by the force ratio and the load scenario
    switches to ``load``.
    """

    load: str
    position: float | None = None
    time: float | None = None
    load_velocity: float = 0.0  # m/s at the load, extension positive
    force_ratio: float | None = None  # None: derived from analysis.force_per_kg
    support: bool = False  # load rests on a stiff support at the contact position
    release: bool = False  # detach when resting on the support and the output pulls back
    stop_stiffness: float | None = None
    stop_damping: float | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    initial: ContinuousState
    initial_mode: ControlMode = ControlMode.HS
    load: str = "swing"
    contact: ContactSpec | None = None
    script: str = "gait"
    script_args: dict[str, float] = field(default_factory=dict)
    dt: float | None = None  # None: params.sim_dt
    trace_interval: float | None = None  # None: control period

    def make_script(self):
        return make_script(self.script, **self.script_args)

    def with_dt(self, dt: float) -> "Scenario":
        return dataclasses.replace(self, dt=dt)


def _require(flat: dict[str, Any], key: str, source: str) -> Any:
    if key not in flat:
        raise ConfigError(f"{source}: missing required key {key!r}")
    return flat[key]


def scenario_from_flat(flat: dict[str, Any], source: str = "<scenario>") -> Scenario:
    flat = dict(flat)
    version = flat.pop("schema_version", None)
    if version is None or str(version).split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ConfigError(f"{source}: missing or unsupported schema_version {version!r}")
    problems: list[str] = []
    script = str(flat.get("script.kind", "gait"))
    if script not in SCRIPTS:
        problems.append(f"script.kind {script!r} is not one of {sorted(SCRIPTS)}")
        script_fields: set[str] = set()
    else:
        script_fields = {f.name for f in dataclasses.fields(SCRIPTS[script])}
    script_args = {}
    for key, value in flat.items():
        if key.startswith("script.") and key != "script.kind":
            name = key[len("script."):]
            if name not in script_fields:
                problems.append(f"{source}: unknown script parameter {key!r}")
            else:
                script_args[name] = float(value)

    known = {
        "scenario.name", "scenario.duration_s", "scenario.dt_s", "scenario.initial_mode",
        "scenario.trace_interval_s", "load.initial", "script.kind",
        "initial.x_o_m", "initial.x1_m", "initial.x2_m", "initial.v_o_mps",
        "initial.v1_mps", "initial.valve_angle_deg",
        "contact.load", "contact.position_m", "contact.time_s", "contact.load_velocity_mps",
        "contact.drop_height_m", "contact.force_ratio", "contact.support", "contact.release",
        "contact.stop_stiffness_npm", "contact.stop_damping_nspm", "contact.gravity_mps2",
    }
    for key in flat:
        if key not in known and not key.startswith("script."):
            problems.append(f"{source}: unknown key {key!r}")
    if problems:
        raise ConfigError(problems)

    initial = ContinuousState(
        x_o=float(flat.get("initial.x_o_m", 0.0)),
        x1=float(flat.get("initial.x1_m", 0.0)),
        x2=float(flat.get("initial.x2_m", 0.0)),
        v_o=float(flat.get("initial.v_o_mps", 0.0)),
        v1=float(flat.get("initial.v1_mps", 0.0)),
        valve_angle=math.radians(float(flat.get("initial.valve_angle_deg", 0.0))),
    )
    contact = None
    if "contact.load" in flat:
        g = float(flat.get("contact.gravity_mps2", 9.81))
        velocity = float(flat.get("contact.load_velocity_mps", 0.0))
        time = flat.get("contact.time_s")
        if "contact.drop_height_m" in flat:
            h = float(flat["contact.drop_height_m"])
            if h < 0:
                raise ConfigError(f"{source}: contact.drop_height_m must be >= 0")
            velocity = -math.sqrt(2.0 * g * h)
            if time is None:
                time = math.sqrt(2.0 * h / g)
        position = flat.get("contact.position_m")
        if position is None and time is None:
            raise ConfigError(f"{source}: contact needs contact.position_m or contact.time_s")
        contact = ContactSpec(
            load=str(flat["contact.load"]),
            position=None if position is None else float(position),
            time=None if time is None else float(time),
            load_velocity=velocity,
            force_ratio=None if "contact.force_ratio" not in flat else float(flat["contact.force_ratio"]),
            support=bool(flat.get("contact.support", False)),
            release=bool(flat.get("contact.release", False)),
            stop_stiffness=flat.get("contact.stop_stiffness_npm"),
            stop_damping=flat.get("contact.stop_damping_nspm"),
        )
    try:
        mode = ControlMode(str(flat.get("scenario.initial_mode", "HS")))
    except ValueError:
        raise ConfigError(f"{source}: unknown scenario.initial_mode") from None
    duration = float(_require(flat, "scenario.duration_s", source))
    dt = flat.get("scenario.dt_s")
    if duration <= 0 or (dt is not None and (dt <= 0 or duration < dt)):
        raise ConfigError(f"{source}: need dt > 0 and duration >= dt")
    return Scenario(
        name=str(_require(flat, "scenario.name", source)),
        duration=duration,
        initial=initial,
        initial_mode=mode,
        load=str(flat.get("load.initial", "swing")),
        contact=contact,
        script=script,
        script_args=script_args,
        dt=None if dt is None else float(dt),
        trace_interval=flat.get("scenario.trace_interval_s"),
    )


def _parse_tree(text: str, source: str) -> dict[str, Any]:
    try:
        return _flatten(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        where = f" (line {line})" if line is not None else ""
        raise ConfigError(f"{source}{where}: parse error: {exc}") from exc


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    return scenario_from_flat(_parse_tree(text, source), source)


def load_scenario(name_or_path: str | Path, overrides: list[str] | None = None) -> Scenario:
    """Load a built-in scenario by name, or a scenario file by path."""
    if str(name_or_path) in BUILTIN:
        fname = f"{name_or_path}.toml"
        text = (resources.files("bimodal_hydro") / "data" / "scenarios" / fname).read_text()
        source = fname
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise ConfigError(
                f"unknown scenario {str(name_or_path)!r}; built-ins are {', '.join(BUILTIN)}"
            )
        text, source = path.read_text(), str(path)
    tree = _parse_tree(text, source)
    tree.update(dict(parse_override(o) for o in overrides or ()))
    return scenario_from_flat(tree, source)


def check_against(scenario: Scenario, params: ActuatorParams) -> None:
    """Cross-check scenario references against the actuator config."""
    labels = {s.label for s in params.scenarios}
    missing = [lbl for lbl in (scenario.load, scenario.contact.load if scenario.contact else None)
               if lbl is not None and lbl not in labels]
    if missing:
        raise ConfigError(f"scenario {scenario.name!r} references undefined loads {missing}")
