"""Static design analyses: mode capabilities, force-speed regions, valve mass map.

All outputs are plain CSV. Forces and speeds refer to the output piston.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from shapely.geometry import Point, Polygon

from .params import ActuatorParams, ValveSpec, derived_constants
from .valve import loss_coefficient, mass_map, write_mass_map_csv

# Reference acceleration values from the capability table being reproduced, kept only
# for side-by-side comparison with the values computed here.
PRINTED_ACCEL = {"HS": (11.5, -1.1), "HF": (3.9, 3.5)}

SWING_LOAD = "swing"
STANCE_LOAD = "stance"


@dataclass(frozen=True)
class CapabilityRow:
    mode: str
    reflected_mass: float  # kg
    max_force: float  # N
    max_velocity: float  # m/s
    accel_swing: float  # m/s^2, piston frame
    accel_stance: float
    printed_swing: float
    printed_stance: float
    frame: str = "piston"

    @property
    def discrepancy_swing(self) -> float:
        return self.accel_swing - self.printed_swing

    @property
    def discrepancy_stance(self) -> float:
        return self.accel_stance - self.printed_stance


def mode_acceleration(max_force: float, external_force: float, output_mass: float, reflected_mass: float) -> float:
    """Peak output acceleration of a single-master mode at full current."""
    return (max_force - external_force) / (output_mass + reflected_mass)


def capability_table(params: ActuatorParams) -> list[CapabilityRow]:
    dc = derived_constants(params)
    swing = params.scenario(SWING_LOAD)
    stance = params.scenario(STANCE_LOAD)
    rows = []
    for name, mode in (("HS", dc.hs), ("HF", dc.hf)):
        a_sw = mode_acceleration(mode.max_force, swing.external_force, swing.output_mass, mode.reflected_mass)
        a_st = mode_acceleration(mode.max_force, stance.external_force, stance.output_mass, mode.reflected_mass)
        printed = PRINTED_ACCEL[name]
        rows.append(
            CapabilityRow(
                name, mode.reflected_mass, mode.max_force, mode.max_velocity,
                a_sw, a_st, printed[0], printed[1],
            )
        )
    return rows


CAPABILITY_COLUMNS = (
    "mode",
    "frame",
    "m_A_kg",
    "F_max_N",
    "v_max_mps",
    "a_swing_mps2",
    "a_stance_mps2",
    "a_swing_printed_mps2",
    "a_stance_printed_mps2",
    "a_swing_discrepancy_mps2",
    "a_stance_discrepancy_mps2",
)


def write_capability_csv(rows: list[CapabilityRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CAPABILITY_COLUMNS)
        for r in rows:
            w.writerow(
                [r.mode, r.frame]
                + [
                    repr(x)
                    for x in (
                        r.reflected_mass, r.max_force, r.max_velocity, r.accel_swing,
                        r.accel_stance, r.printed_swing, r.printed_stance,
                        r.discrepancy_swing, r.discrepancy_stance,
                    )
                ]
            )


def read_capability_csv(path: str | Path) -> list[CapabilityRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CAPABILITY_COLUMNS:
            raise ValueError(f"unexpected capability columns {reader.fieldnames}")
        return [
            CapabilityRow(
                mode=row["mode"],
                reflected_mass=float(row["m_A_kg"]),
                max_force=float(row["F_max_N"]),
                max_velocity=float(row["v_max_mps"]),
                accel_swing=float(row["a_swing_mps2"]),
                accel_stance=float(row["a_stance_mps2"]),
                printed_swing=float(row["a_swing_printed_mps2"]),
                printed_stance=float(row["a_stance_printed_mps2"]),
                frame=row["frame"],
            )
            for row in reader
        ]


# --- force-speed regions ------------------------------------------------------


@dataclass(frozen=True)
class QuadrantRegion:
    """Closed boundary in the (velocity, force) plane; first point repeated last."""

    label: str
    boundary: tuple[tuple[float, float], ...]  # (v m/s, F N)
    quadrants: tuple[int, ...]

    def polygon(self) -> Polygon:
        return Polygon(self.boundary)

    def contains(self, velocity: float, force: float) -> bool:
        return self.polygon().covers(Point(velocity, force))


def _rectangle(label: str, f: float, v: float) -> QuadrantRegion:
    pts = ((v, f), (-v, f), (-v, -f), (v, -f), (v, f))
    return QuadrantRegion(label, pts, (1, 2, 3, 4))


def quadrant_map(
    params: ActuatorParams,
    valve_spec: ValveSpec | None = None,
    braking_angle_deg: float | None = None,
    samples: int = 41,
) -> list[QuadrantRegion]:
    """Operating regions of HS, HF and throttled braking.

    Braking opposes the motion: quadrant IV (v > 0, F < 0) and its mirror in
    quadrant II. Up to the HS speed limit the achievable braking force is the
    throttle force at the braking valve angle plus the HS motor force acting
    against the motion.
    """
    valve_spec = valve_spec or params.valve
    if samples < 2:
        raise ValueError("samples must be >= 2")
    dc = derived_constants(params)
    angle = math.radians(
        params.control.braking_angle_deg if braking_angle_deg is None else braking_angle_deg
    )
    coeff = 0.5 * loss_coefficient(angle, valve_spec) * params.fluid.density * valve_spec.bore_area
    v_lim, f_motor = dc.hs.max_velocity, dc.hs.max_force
    vs = [v_lim * i / (samples - 1) for i in range(samples)]
    edge = [(v, -(f_motor + coeff * v * v)) for v in reversed(vs)]
    iv = ((0.0, 0.0), (v_lim, 0.0)) + tuple(edge) + ((0.0, 0.0),)
    ii = tuple((-v, -f) for v, f in iv)
    return [
        _rectangle("HS", dc.hs.max_force, dc.hs.max_velocity),
        _rectangle("HF", dc.hf.max_force, dc.hf.max_velocity),
        QuadrantRegion("braking_IV", iv, (4,)),
        QuadrantRegion("braking_II", ii, (2,)),
    ]


def regions_containing(regions: list[QuadrantRegion], velocity: float, force: float) -> list[str]:
    return [r.label for r in regions if r.contains(velocity, force)]


QUADRANT_COLUMNS = ("region", "quadrants", "index", "v_mps", "F_N")


def write_quadrant_csv(regions: list[QuadrantRegion], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUADRANT_COLUMNS)
        for r in regions:
            tags = " ".join(str(q) for q in r.quadrants)
            for i, (v, f) in enumerate(r.boundary):
                w.writerow([r.label, tags, i, repr(v), repr(f)])


def read_quadrant_csv(path: str | Path) -> list[QuadrantRegion]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != QUADRANT_COLUMNS:
            raise ValueError(f"unexpected quadrant columns {reader.fieldnames}")
        rows = list(reader)
    out: dict[str, tuple[tuple[int, ...], list[tuple[float, float]]]] = {}
    for row in rows:
        tags = tuple(int(q) for q in row["quadrants"].split())
        out.setdefault(row["region"], (tags, []))[1].append((float(row["v_mps"]), float(row["F_N"])))
    return [QuadrantRegion(label, tuple(pts), tags) for label, (tags, pts) in out.items()]


# --- payload ----------------------------------------------------------------------


def payload_capacity(params: ActuatorParams, force_per_kg: float | None = None) -> tuple[float, float]:
    """Sustainable payload (kg) in HS and HF for a given output force per kg."""
    fpk = params.analysis.force_per_kg if force_per_kg is None else force_per_kg
    if fpk <= 0:
        raise ValueError("force_per_kg must be > 0")
    dc = derived_constants(params)
    return dc.hs.max_force / fpk, dc.hf.max_force / fpk


# --- valve map ----------------------------------------------------------------------

VALVE_MAP_D_RANGE = (6.35e-3, 19.05e-3)
VALVE_MAP_DT_RANGE = (0.05, 0.5)


def valve_mass_map(
    params: ActuatorParams,
    material: str = "brass",
    d_range: tuple[float, float] = VALVE_MAP_D_RANGE,
    dt_range: tuple[float, float] = VALVE_MAP_DT_RANGE,
    resolution: int | tuple[int, int] = 25,
    include: tuple[tuple[float, float], ...] = ((9.52e-3, 0.13),),
):
    """Mass grid for one material; ``include`` adds exact anchor points as extra rows."""
    grid = mass_map(
        d_range,
        dt_range,
        params.material(material),
        params.material(params.valve_design.reference_material),
        resolution,
        params.valve_design,
    )
    for d, t in include:
        grid.append(
            mass_map((d, d), (t, t), params.material(material),
                     params.material(params.valve_design.reference_material), 1,
                     params.valve_design)[0]
        )
    return grid


__all__ = [
    "CAPABILITY_COLUMNS",
    "CapabilityRow",
    "QUADRANT_COLUMNS",
    "QuadrantRegion",
    "capability_table",
    "mode_acceleration",
    "payload_capacity",
    "quadrant_map",
    "read_capability_csv",
    "read_quadrant_csv",
    "regions_containing",
    "valve_mass_map",
    "write_capability_csv",
    "write_mass_map_csv",
    "write_quadrant_csv",
]
