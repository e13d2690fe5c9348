"""Physical parameter types for the bimodal hydrostatic actuator.

All quantities are SI. Forces, masses, velocities and damping coefficients
are expressed at the piston they act on (linear frame), motor quantities
in the rotor frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``problems`` holds one human-readable line per violated invariant.
    """

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class MotorScrewLine:
    """One electric motor driving a master cylinder through a ball screw."""

    torque_constant: float  # N*m/A
    max_current: float  # A
    inertia: float  # kg*m^2, rotor plus screw
    reduction_ratio: float
    screw_lead: float  # m/rev
    max_speed: float  # rad/s at the motor
    viscous_loss: float = 0.0  # N*s/m at the piston
    piston_mass: float = 0.1  # kg, including fluid contribution

    @property
    def transformation_ratio(self) -> float:
        """Motor angle to piston translation, 2*pi*R/lead (1/m)."""
        return 2.0 * math.pi * self.reduction_ratio / self.screw_lead

    @property
    def reflected_mass(self) -> float:
        """Piston mass plus rotor inertia seen at the piston."""
        return self.piston_mass + self.inertia * self.transformation_ratio**2

    @property
    def max_force(self) -> float:
        return self.torque_constant * self.transformation_ratio * self.max_current

    @property
    def max_velocity(self) -> float:
        return self.max_speed / self.transformation_ratio

    def force(self, current: float) -> float:
        """Piston force produced by a motor current."""
        return self.torque_constant * self.transformation_ratio * current


@dataclass(frozen=True)
class LoadScenario:
    """Load reflected at the output piston.

    ``external_force`` is positive when it opposes extension (gravity on a
    lifted payload).
    """

    label: str
    output_mass: float  # kg
    external_force: float = 0.0  # N
    output_loss: float = 0.0  # N*s/m


@dataclass(frozen=True)
class FluidSpec:
    density: float = 1036.0  # kg/m^3, propylene glycol
    cylinder_area: float = 5.70e-4  # m^2, 27 mm bore
    pressure_rating: float = 3.45e6  # Pa
    compliance_enabled: bool = False


@dataclass(frozen=True)
class ValveSpec:
    """Servo ball valve: bore, servo rate limit and loss-coefficient map."""

    bore_diameter: float = 9.52e-3  # m
    max_angular_speed: float = 12.2  # rad/s
    loss_map_deg: tuple[float, ...] = (0.0, 30.0, 45.0, 60.0, 89.5)
    loss_map_k: tuple[float, ...] = (0.05, 2.0e3, 1.85e5, 5.0e6, 1.0e9)
    closed_tolerance_deg: float = 0.5

    @property
    def bore_area(self) -> float:
        return math.pi * self.bore_diameter**2 / 4.0

    @property
    def k_open(self) -> float:
        return self.loss_map_k[0]

    @property
    def closed_tolerance(self) -> float:
        return math.radians(self.closed_tolerance_deg)


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    density: float  # kg/m^3
    yield_strength: float  # Pa


@dataclass(frozen=True)
class ValveDesignConstants:
    specific_power: float = 600.0  # W/kg, motor
    specific_torque: float = 10.0  # N*m/kg, gearbox
    reference_material: str = "brass"


@dataclass(frozen=True)
class StrokeSpec:
    """Cylinder strokes (positions run from 0 at full retraction) and end stops."""

    output: float = 0.0762
    line1: float = 0.0762
    line2: float = 0.0762
    stop_stiffness: float = 1.0e6  # N/m
    stop_damping: float = 1.0e4  # N*s/m


@dataclass(frozen=True)
class PIDGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0


@dataclass(frozen=True)
class ContactThresholds:
    pressure_threshold: float = 0.15e6  # Pa
    n_consec: int = 5
    window: int = 10
    velocity_drop: float = 0.05  # m/s


@dataclass(frozen=True)
class ControlConfig:
    rate_hz: float = 1000.0
    contact: ContactThresholds = field(default_factory=ContactThresholds)
    # EM2 low-level velocity loop: A per rad/s of motor speed error
    em2_velocity: PIDGains = field(default_factory=lambda: PIDGains(kp=0.03, ki=0.6))
    # HS: M2 follows M1, piston velocity command per metre of stroke error
    stroke_hs_gain: float = 20.0
    # HF: EM1 current per metre (and m/s) of M1-to-M2 stroke error
    stroke_hf: PIDGains = field(default_factory=lambda: PIDGains(kp=300.0, kd=20.0))
    braking_angle_deg: float = 45.0


@dataclass(frozen=True)
class AnalysisConfig:
    force_per_kg: float = 46.2  # N of piston force per kg of payload
    gravity: float = 9.81

    @property
    def force_ratio(self) -> float:
        """Piston-to-load force ratio r (load velocity = r * piston velocity)."""
        return self.force_per_kg / self.gravity


DEFAULT_LINE1 = MotorScrewLine(
    torque_constant=0.0934,
    max_current=11.9281,
    inertia=1.00308e-4,
    reduction_ratio=1.0,
    screw_lead=0.020,
    max_speed=251.327,
)
DEFAULT_LINE2 = MotorScrewLine(
    torque_constant=0.0255,
    max_current=3.20985,
    inertia=7.18868e-6,
    reduction_ratio=28.0,
    screw_lead=0.005,
    max_speed=879.646,
)
DEFAULT_SCENARIOS = (
    LoadScenario("swing", 17.0, 0.0),
    LoadScenario("stance", 460.0, 1155.0),
    LoadScenario("lift10", 200.0, 462.0),
    LoadScenario("drop", 377.05, 785.4),
)
DEFAULT_MATERIALS = (
    MaterialSpec("brass", 8500.0, 200.0e6),
    MaterialSpec("al7075", 2810.0, 503.0e6),
)


@dataclass(frozen=True)
class ActuatorParams:
    line1: MotorScrewLine = DEFAULT_LINE1
    line2: MotorScrewLine = DEFAULT_LINE2
    fluid: FluidSpec = field(default_factory=FluidSpec)
    valve: ValveSpec = field(default_factory=ValveSpec)
    valve_design: ValveDesignConstants = field(default_factory=ValveDesignConstants)
    materials: tuple[MaterialSpec, ...] = DEFAULT_MATERIALS
    stroke: StrokeSpec = field(default_factory=StrokeSpec)
    scenarios: tuple[LoadScenario, ...] = DEFAULT_SCENARIOS
    control: ControlConfig = field(default_factory=ControlConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    sim_dt: float = 1.0e-4

    def scenario(self, label: str) -> LoadScenario:
        for s in self.scenarios:
            if s.label == label:
                return s
        raise KeyError(f"no load scenario labelled {label!r}")

    def material(self, name: str) -> MaterialSpec:
        for m in self.materials:
            if m.name == name:
                return m
        raise KeyError(f"no material named {name!r}")


@dataclass(frozen=True)
class ModeConstants:
    reflected_mass: float  # kg
    max_force: float  # N
    max_velocity: float  # m/s


@dataclass(frozen=True)
class DerivedConstants:
    t1: float
    t2: float
    hs: ModeConstants
    hf: ModeConstants


def derived_constants(params: ActuatorParams) -> DerivedConstants:
    """Transformation ratios and per-mode reflected mass, force and speed limits."""
    l1, l2 = params.line1, params.line2
    return DerivedConstants(
        t1=l1.transformation_ratio,
        t2=l2.transformation_ratio,
        hs=ModeConstants(l1.reflected_mass, l1.max_force, l1.max_velocity),
        hf=ModeConstants(l2.reflected_mass, l2.max_force, l2.max_velocity),
    )


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate(params: ActuatorParams) -> list[str]:
    """Check every invariant. Raises ConfigError listing all violations.

    Returns the list of non-fatal warnings.
    """
    errors: list[str] = []
    warnings: list[str] = []

    for name, line in (("line1", params.line1), ("line2", params.line2)):
        for attr, label in (
            ("torque_constant", "k_i"),
            ("max_current", "I_i,max"),
            ("inertia", "J_i"),
            ("reduction_ratio", "R_i"),
            ("screw_lead", "phi_i (screw lead)"),
            ("max_speed", "omega_i,max"),
            ("piston_mass", "m_i"),
        ):
            v = getattr(line, attr)
            if not _finite(v) or v <= 0:
                errors.append(f"{name}.{attr} ({label}) must be > 0, got {v!r}")
        if not _finite(line.viscous_loss) or line.viscous_loss < 0:
            errors.append(f"{name}.viscous_loss (c_i) must be >= 0, got {line.viscous_loss!r}")

    f = params.fluid
    if not _finite(f.density) or f.density <= 0:
        errors.append(f"fluid.density must be > 0, got {f.density!r}")
    if not _finite(f.cylinder_area) or f.cylinder_area <= 0:
        errors.append(f"fluid.cylinder_area must be > 0, got {f.cylinder_area!r}")
    if not _finite(f.pressure_rating) or f.pressure_rating <= 0:
        errors.append(f"fluid.pressure_rating must be > 0, got {f.pressure_rating!r}")

    v = params.valve
    if not _finite(v.bore_diameter) or v.bore_diameter <= 0:
        errors.append(f"valve.bore_diameter must be > 0, got {v.bore_diameter!r}")
    if not _finite(v.max_angular_speed) or v.max_angular_speed <= 0:
        errors.append(f"valve.max_angular_speed must be > 0, got {v.max_angular_speed!r}")
    if len(v.loss_map_deg) != len(v.loss_map_k) or len(v.loss_map_deg) < 2:
        errors.append("valve.loss_map_deg and valve.loss_map_k must have equal length >= 2")
    else:
        angles, ks = v.loss_map_deg, v.loss_map_k
        if angles[0] != 0.0:
            errors.append("valve.loss_map_deg must start at 0 (fully open)")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            errors.append("valve.loss_map_deg must be strictly increasing")
        if any(a < 0 or a > 90 for a in angles):
            errors.append("valve.loss_map_deg entries must lie in [0, 90]")
        if any(not _finite(k) or k <= 0 for k in ks):
            errors.append("valve.loss_map_k entries must be finite and > 0")
        elif any(b <= a for a, b in zip(ks, ks[1:])):
            errors.append("valve.loss_map_k must be strictly increasing in angle")
    if not 0 < v.closed_tolerance_deg < 10:
        errors.append("valve.closed_tolerance_deg must lie in (0, 10)")

    for m in params.materials:
        if not _finite(m.density) or m.density <= 0 or not _finite(m.yield_strength) or m.yield_strength <= 0:
            errors.append(f"material.{m.name} density and yield strength must be > 0")
    if params.valve_design.reference_material not in {m.name for m in params.materials}:
        errors.append(
            f"valve_design.reference_material {params.valve_design.reference_material!r} is not defined"
        )
    if params.valve_design.specific_power <= 0 or params.valve_design.specific_torque <= 0:
        errors.append("valve_design specific power and torque must be > 0")

    s = params.stroke
    for attr in ("output", "line1", "line2", "stop_stiffness"):
        if not _finite(getattr(s, attr)) or getattr(s, attr) <= 0:
            errors.append(f"stroke.{attr} must be > 0")
    if not _finite(s.stop_damping) or s.stop_damping < 0:
        errors.append("stroke.stop_damping must be >= 0")

    labels = [sc.label for sc in params.scenarios]
    if len(set(labels)) != len(labels):
        errors.append("load scenario labels must be unique")
    for sc in params.scenarios:
        if not _finite(sc.output_mass) or sc.output_mass <= 0:
            errors.append(f"load.{sc.label}.output_mass (m_o) must be > 0")
        if not _finite(sc.external_force):
            errors.append(f"load.{sc.label}.external_force (f_e) must be finite")
        if not _finite(sc.output_loss) or sc.output_loss < 0:
            errors.append(f"load.{sc.label}.output_loss must be >= 0")

    c = params.control
    if c.rate_hz <= 0:
        errors.append("control.rate_hz must be > 0")
    if c.contact.n_consec < 1 or c.contact.window < c.contact.n_consec:
        errors.append("control.contact requires 1 <= n_consec <= window")
    if not 0 <= c.braking_angle_deg <= 90:
        errors.append("control.braking_angle_deg must lie in [0, 90]")
    if params.analysis.force_per_kg <= 0 or params.analysis.gravity <= 0:
        errors.append("analysis.force_per_kg and analysis.gravity must be > 0")
    if not _finite(params.sim_dt) or params.sim_dt <= 0:
        errors.append("sim.dt_s must be > 0")

    if errors:
        raise ConfigError(errors)

    ratio = params.line2.transformation_ratio / params.line1.transformation_ratio
    if ratio < 10:
        warnings.append(
            f"T2/T1 = {ratio:.3g} < 10: the high-speed reduced model is a poor approximation"
        )
    for label, force in (("HS", params.line1.max_force), ("HF", params.line2.max_force)):
        p = force / params.fluid.cylinder_area
        if p > params.fluid.pressure_rating:
            warnings.append(
                f"{label} max force {force:.0f} N gives {p / 1e6:.2f} MPa, above the "
                f"{params.fluid.pressure_rating / 1e6:.2f} MPa cylinder rating"
            )
    return warnings
