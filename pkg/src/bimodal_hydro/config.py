"""Flat key-value configuration files.

The on-disk format is TOML restricted to dotted keys, one per line, with the
unit in the key name (``line1.screw_lead_m = 0.020``). Every key is optional
except ``schema_version``; omitted keys take the built-in defaults.
"""

from __future__ import annotations

import math
import re
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .params import (
    ActuatorParams,
    AnalysisConfig,
    ConfigError,
    ContactThresholds,
    ControlConfig,
    FluidSpec,
    LoadScenario,
    MaterialSpec,
    MotorScrewLine,
    PIDGains,
    StrokeSpec,
    ValveDesignConstants,
    ValveSpec,
    validate,
)

SCHEMA_VERSION = "1.0"

_LINE_KEYS = (
    ("torque_constant_nm_per_a", "torque_constant", "motor torque constant"),
    ("max_current_a", "max_current", "peak motor current"),
    ("inertia_kgm2", "inertia", "rotor + screw inertia"),
    ("reduction_ratio", "reduction_ratio", "gearhead ratio between motor and screw"),
    ("screw_lead_m", "screw_lead", "ball screw lead per revolution"),
    ("max_speed_radps", "max_speed", "max motor speed"),
    ("viscous_loss_nspm", "viscous_loss", "linear viscous loss at the piston"),
    ("piston_mass_kg", "piston_mass", "piston mass incl. fluid"),
)
_LOAD_KEYS = (
    ("output_mass_kg", "output_mass"),
    ("external_force_n", "external_force"),
    ("output_loss_nspm", "output_loss"),
)
_MATERIAL_KEYS = (
    ("density_kgpm3", "density"),
    ("yield_strength_pa", "yield_strength"),
)
_DYNAMIC = re.compile(r"^(load|material)\.([A-Za-z0-9_-]+)\.([a-z0-9_]+)$")

_COMMENTS = {
    "schema_version": "configuration schema version (required)",
    "fluid.density_kgpm3": "fill fluid density",
    "fluid.cylinder_area_m2": "output cylinder piston area, used for pressure reporting",
    "fluid.pressure_rating_pa": "cylinder pressure rating",
    "fluid.compliance_enabled": "lumped hydraulic compliance (not implemented, keep false)",
    "valve.bore_diameter_m": "ball valve bore",
    "valve.max_angular_speed_radps": "servo rate limit",
    "valve.loss_map_deg": "loss map angles, 0 = fully open",
    "valve.loss_map_k": "loss coefficient at each angle (log-linear interpolation)",
    "valve.closed_tolerance_deg": "angle below 90 deg treated as fully closed",
    "valve_design.specific_power_wpkg": "servo motor specific power",
    "valve_design.specific_torque_nmpkg": "gearbox specific torque",
    "valve_design.reference_material": "material the body-mass regression was fitted on",
    "stroke.output_m": "output (slave) cylinder stroke",
    "stroke.stop_stiffness_npm": "end-stop spring",
    "stroke.stop_damping_nspm": "end-stop damper",
    "control.rate_hz": "controller and valve command rate",
    "control.contact.pressure_threshold_pa": "contact: slave pressure threshold",
    "control.contact.n_consec": "contact: consecutive frames above threshold",
    "control.contact.window": "contact: frames searched for the velocity drop",
    "control.contact.velocity_drop_mps": "contact: required drop in knee velocity",
    "control.em2_velocity.kp": "EM2 velocity PID, A per rad/s",
    "control.stroke_hs.gain_per_s": "HS: M2 velocity command per metre of stroke error",
    "control.stroke_hf.kp_a_per_m": "HF: EM1 current per metre of stroke error",
    "control.braking_angle_deg": "valve angle held in BRAKING mode",
    "analysis.force_per_kg_npkg": "piston force per kg of payload",
    "sim.dt_s": "integrator step",
}


def to_flat(params: ActuatorParams) -> dict[str, Any]:
    """Flatten params to the ordered dotted-key mapping written to disk."""
    flat: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    for name in ("line1", "line2"):
        line = getattr(params, name)
        for key, attr, _ in _LINE_KEYS:
            flat[f"{name}.{key}"] = getattr(line, attr)
    f = params.fluid
    flat["fluid.density_kgpm3"] = f.density
    flat["fluid.cylinder_area_m2"] = f.cylinder_area
    flat["fluid.pressure_rating_pa"] = f.pressure_rating
    flat["fluid.compliance_enabled"] = f.compliance_enabled
    v = params.valve
    flat["valve.bore_diameter_m"] = v.bore_diameter
    flat["valve.max_angular_speed_radps"] = v.max_angular_speed
    flat["valve.loss_map_deg"] = list(v.loss_map_deg)
    flat["valve.loss_map_k"] = list(v.loss_map_k)
    flat["valve.closed_tolerance_deg"] = v.closed_tolerance_deg
    vd = params.valve_design
    flat["valve_design.specific_power_wpkg"] = vd.specific_power
    flat["valve_design.specific_torque_nmpkg"] = vd.specific_torque
    flat["valve_design.reference_material"] = vd.reference_material
    for m in params.materials:
        for key, attr in _MATERIAL_KEYS:
            flat[f"material.{m.name}.{key}"] = getattr(m, attr)
    s = params.stroke
    flat["stroke.output_m"] = s.output
    flat["stroke.line1_m"] = s.line1
    flat["stroke.line2_m"] = s.line2
    flat["stroke.stop_stiffness_npm"] = s.stop_stiffness
    flat["stroke.stop_damping_nspm"] = s.stop_damping
    for sc in params.scenarios:
        for key, attr in _LOAD_KEYS:
            flat[f"load.{sc.label}.{key}"] = getattr(sc, attr)
    c = params.control
    flat["control.rate_hz"] = c.rate_hz
    flat["control.contact.pressure_threshold_pa"] = c.contact.pressure_threshold
    flat["control.contact.n_consec"] = c.contact.n_consec
    flat["control.contact.window"] = c.contact.window
    flat["control.contact.velocity_drop_mps"] = c.contact.velocity_drop
    flat["control.em2_velocity.kp"] = c.em2_velocity.kp
    flat["control.em2_velocity.ki"] = c.em2_velocity.ki
    flat["control.em2_velocity.kd"] = c.em2_velocity.kd
    flat["control.stroke_hs.gain_per_s"] = c.stroke_hs_gain
    flat["control.stroke_hf.kp_a_per_m"] = c.stroke_hf.kp
    flat["control.stroke_hf.ki_a_per_ms"] = c.stroke_hf.ki
    flat["control.stroke_hf.kd_as_per_m"] = c.stroke_hf.kd
    flat["control.braking_angle_deg"] = c.braking_angle_deg
    flat["analysis.force_per_kg_npkg"] = params.analysis.force_per_kg
    flat["analysis.gravity_mps2"] = params.analysis.gravity
    flat["sim.dt_s"] = params.sim_dt
    return flat


DEFAULT_FLAT = to_flat(ActuatorParams())


def from_flat(flat: dict[str, Any]) -> ActuatorParams:
    """Build params from a complete flat mapping (no defaults applied here)."""
    lines = {}
    for name in ("line1", "line2"):
        lines[name] = MotorScrewLine(
            **{attr: float(flat[f"{name}.{key}"]) for key, attr, _ in _LINE_KEYS}
        )
    loads: dict[str, dict[str, float]] = {}
    materials: dict[str, dict[str, float]] = {}
    for key, value in flat.items():
        m = _DYNAMIC.match(key)
        if not m:
            continue
        kind, label, leaf = m.groups()
        target = loads if kind == "load" else materials
        target.setdefault(label, {})[leaf] = float(value)

    scenarios = []
    for label, values in loads.items():
        if "output_mass_kg" not in values:
            raise ConfigError(f"load.{label}.output_mass_kg is required")
        scenarios.append(
            LoadScenario(
                label,
                values["output_mass_kg"],
                values.get("external_force_n", 0.0),
                values.get("output_loss_nspm", 0.0),
            )
        )
    mats = []
    for name, values in materials.items():
        missing = [k for k, _ in _MATERIAL_KEYS if k not in values]
        if missing:
            raise ConfigError(f"material.{name} is missing {', '.join(missing)}")
        mats.append(MaterialSpec(name, values["density_kgpm3"], values["yield_strength_pa"]))

    return ActuatorParams(
        line1=lines["line1"],
        line2=lines["line2"],
        fluid=FluidSpec(
            density=float(flat["fluid.density_kgpm3"]),
            cylinder_area=float(flat["fluid.cylinder_area_m2"]),
            pressure_rating=float(flat["fluid.pressure_rating_pa"]),
            compliance_enabled=bool(flat["fluid.compliance_enabled"]),
        ),
        valve=ValveSpec(
            bore_diameter=float(flat["valve.bore_diameter_m"]),
            max_angular_speed=float(flat["valve.max_angular_speed_radps"]),
            loss_map_deg=tuple(float(a) for a in flat["valve.loss_map_deg"]),
            loss_map_k=tuple(float(k) for k in flat["valve.loss_map_k"]),
            closed_tolerance_deg=float(flat["valve.closed_tolerance_deg"]),
        ),
        valve_design=ValveDesignConstants(
            specific_power=float(flat["valve_design.specific_power_wpkg"]),
            specific_torque=float(flat["valve_design.specific_torque_nmpkg"]),
            reference_material=str(flat["valve_design.reference_material"]),
        ),
        materials=tuple(mats),
        stroke=StrokeSpec(
            output=float(flat["stroke.output_m"]),
            line1=float(flat["stroke.line1_m"]),
            line2=float(flat["stroke.line2_m"]),
            stop_stiffness=float(flat["stroke.stop_stiffness_npm"]),
            stop_damping=float(flat["stroke.stop_damping_nspm"]),
        ),
        scenarios=tuple(scenarios),
        control=ControlConfig(
            rate_hz=float(flat["control.rate_hz"]),
            contact=ContactThresholds(
                pressure_threshold=float(flat["control.contact.pressure_threshold_pa"]),
                n_consec=int(flat["control.contact.n_consec"]),
                window=int(flat["control.contact.window"]),
                velocity_drop=float(flat["control.contact.velocity_drop_mps"]),
            ),
            em2_velocity=PIDGains(
                float(flat["control.em2_velocity.kp"]),
                float(flat["control.em2_velocity.ki"]),
                float(flat["control.em2_velocity.kd"]),
            ),
            stroke_hs_gain=float(flat["control.stroke_hs.gain_per_s"]),
            stroke_hf=PIDGains(
                float(flat["control.stroke_hf.kp_a_per_m"]),
                float(flat["control.stroke_hf.ki_a_per_ms"]),
                float(flat["control.stroke_hf.kd_as_per_m"]),
            ),
            braking_angle_deg=float(flat["control.braking_angle_deg"]),
        ),
        analysis=AnalysisConfig(
            force_per_kg=float(flat["analysis.force_per_kg_npkg"]),
            gravity=float(flat["analysis.gravity_mps2"]),
        ),
        sim_dt=float(flat["sim.dt_s"]),
    )


def _flatten(tree: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in tree.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _check_value(key: str, value: Any, problems: list[str]) -> Any:
    """Coerce ``value`` to the type of the default for ``key``."""
    dynamic = _DYNAMIC.match(key)
    if key in DEFAULT_FLAT:
        ref = DEFAULT_FLAT[key]
    elif dynamic and dynamic.group(3) in {
        k for k, _ in (_LOAD_KEYS if dynamic.group(1) == "load" else _MATERIAL_KEYS)
    }:
        ref = 0.0
    else:
        problems.append(f"unknown key {key!r}")
        return value
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            problems.append(f"{key} must be true or false, got {value!r}")
        return value
    if isinstance(ref, int):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key} must be a number, got {value!r}")
            return value
        return float(value)
    if isinstance(ref, str):
        if not isinstance(value, str):
            problems.append(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(ref, list):
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            problems.append(f"{key} must be a list of numbers, got {value!r}")
            return value
        return [float(v) for v in value]
    return value


def merge_flat(overrides: dict[str, Any], base: dict[str, Any] | None = None) -> dict[str, Any]:
    """Validate key names/types in ``overrides`` and merge them over ``base``."""
    problems: list[str] = []
    merged = dict(DEFAULT_FLAT if base is None else base)
    for key, value in overrides.items():
        if key == "schema_version":
            continue
        merged[key] = _check_value(key, value, problems)
    if problems:
        raise ConfigError(problems)
    return merged


def parse_config_text(text: str, source: str = "<string>") -> dict[str, Any]:
    """Parse config text to a complete flat mapping (defaults applied)."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        where = f" (line {line})" if line is not None else ""
        raise ConfigError(f"{source}{where}: parse error: {exc}") from exc
    flat = _flatten(tree)
    version = flat.get("schema_version")
    if version is None:
        raise ConfigError(f"{source}: missing required key 'schema_version'")
    if not isinstance(version, str) or version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ConfigError(
            f"{source}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    return merge_flat(flat)


def parse_override(item: str) -> tuple[str, Any]:
    """Parse one ``dotted.key=value`` override; the value uses TOML syntax."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key, raw = key.strip(), raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def build_params(flat: dict[str, Any]) -> tuple[ActuatorParams, list[str]]:
    """Construct and validate params; returns (params, warnings)."""
    params = from_flat(flat)
    return params, validate(params)


def load_config(
    path: str | Path | None = None, overrides: list[str] | None = None
) -> ActuatorParams:
    """Read a config file (or the built-in defaults when ``path`` is None)."""
    params, _ = load_config_with_warnings(path, overrides)
    return params


def load_config_with_warnings(
    path: str | Path | None = None, overrides: list[str] | None = None
) -> tuple[ActuatorParams, list[str]]:
    if path is None:
        flat = dict(DEFAULT_FLAT)
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        flat = parse_config_text(path.read_text(), str(path))
    if overrides:
        flat = merge_flat(dict(parse_override(o) for o in overrides), flat)
    return build_params(flat)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError(f"cannot serialise non-finite value {value!r}")
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def dump_flat(flat: dict[str, Any]) -> str:
    lines = ["# Bimodal hydrostatic actuator configuration. SI units, unit in key name."]
    group = None
    for key, value in flat.items():
        head = key.split(".")[0]
        if head != group and key != "schema_version":
            lines.append("")
            group = head
        comment = _COMMENTS.get(key)
        if comment is None:
            for (leaf, _, text) in _LINE_KEYS:
                if key.endswith("." + leaf) and key.startswith("line"):
                    comment = text
        line = f"{key} = {_format_value(value)}"
        lines.append(f"{line:<52} # {comment}" if comment else line)
    return "\n".join(lines) + "\n"


def dump_config(params: ActuatorParams) -> str:
    """Serialise params to config-file text that parses back to equal params."""
    return dump_flat(to_flat(params))
