"""Servo ball valve: rate-limited angle, loss map and mass-delay-flow sizing."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .params import ActuatorParams, FluidSpec, MaterialSpec, ValveDesignConstants, ValveSpec

FULLY_CLOSED = math.pi / 2

# Range of the bore diameters behind the empirical fits.
TORQUE_FIT_RANGE = (4.0e-3, 20.0e-3)
BODY_FIT_RANGE = (6.35e-3, 19.05e-3)


class ValveDomainError(ValueError):
    """Bore diameter outside the range where the empirical fits are positive."""


def step_valve(commanded: float, current: float, dt: float, spec: ValveSpec) -> float:
    """Advance the valve angle toward ``commanded`` at no more than the servo rate."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    target = min(max(commanded, 0.0), FULLY_CLOSED)
    max_move = spec.max_angular_speed * dt
    delta = target - current
    if abs(delta) <= max_move:
        angle = target
    else:
        angle = current + math.copysign(max_move, delta)
    return min(max(angle, 0.0), FULLY_CLOSED)


def loss_coefficient(angle: float, spec: ValveSpec) -> float:
    """k(angle), log-linear interpolation on the loss map; clamped at the ends."""
    deg = math.degrees(angle)
    xs, ks = spec.loss_map_deg, spec.loss_map_k
    if deg <= xs[0]:
        return ks[0]
    if deg >= xs[-1]:
        return ks[-1]
    for i in range(1, len(xs)):
        if deg <= xs[i]:
            frac = (deg - xs[i - 1]) / (xs[i] - xs[i - 1])
            return math.exp(math.log(ks[i - 1]) + frac * (math.log(ks[i]) - math.log(ks[i - 1])))
    return ks[-1]


def calibrate_loss_coefficient(
    braking_force: float, piston_speed: float, fluid: FluidSpec, spec: ValveSpec
) -> float:
    """Loss coefficient that makes the throttle force equal ``braking_force`` at ``piston_speed``."""
    return 2.0 * braking_force / (fluid.density * spec.bore_area * piston_speed**2)


def _warn_outside(d: float, bounds: tuple[float, float], what: str) -> None:
    lo, hi = bounds
    if not lo <= d <= hi:
        warnings.warn(
            f"bore {d * 1e3:.2f} mm is outside the {what} fit range "
            f"{lo * 1e3:.2f}-{hi * 1e3:.2f} mm; extrapolating",
            stacklevel=3,
        )


def breakaway_torque(d: float) -> float:
    """Torque (N*m) to unseat a ball valve of bore ``d`` (m)."""
    _warn_outside(d, TORQUE_FIT_RANGE, "breakaway torque")
    tau = 132.0 * d - 0.2
    if tau <= 0:
        raise ValveDomainError(f"breakaway torque fit is non-positive for d = {d:g} m")
    return tau


def body_mass_brass(d: float) -> float:
    """Brass three-way valve body mass (kg) for bore ``d`` (m)."""
    _warn_outside(d, BODY_FIT_RANGE, "body mass")
    m = 41.0 * d - 0.07
    if m <= 0:
        raise ValveDomainError(f"body mass fit is non-positive for d = {d:g} m")
    return m


@dataclass(frozen=True)
class ValveDesignPoint:
    d: float
    cycle_time: float
    material: MaterialSpec
    mass_motor: float
    mass_gearbox: float
    mass_body: float
    breakaway_torque: float

    @property
    def mass_total(self) -> float:
        return self.mass_motor + self.mass_gearbox + self.mass_body

    @property
    def body_fraction(self) -> float:
        return self.mass_body / self.mass_total


def valve_unit_mass(
    d: float,
    cycle_time: float,
    material: MaterialSpec,
    reference: MaterialSpec,
    constants: ValveDesignConstants = ValveDesignConstants(),
) -> ValveDesignPoint:
    """Mass of a motorised ball valve with a 90 degree cycle time ``cycle_time``.

    The motor must deliver the breakaway torque over the whole quarter turn;
    the body mass scales from the brass regression by the ratio of specific
    strengths of ``material`` and ``reference``.
    """
    if cycle_time <= 0:
        raise ValueError("cycle time must be > 0")
    tau = breakaway_torque(d)
    motor = math.pi * tau / (2.0 * constants.specific_power * cycle_time)
    gearbox = tau / constants.specific_torque
    strength_ratio = (material.density / material.yield_strength) * (
        reference.yield_strength / reference.density
    )
    body = strength_ratio * body_mass_brass(d)
    return ValveDesignPoint(d, cycle_time, material, motor, gearbox, body, tau)


def design_point(params: ActuatorParams, d: float, cycle_time: float, material: str) -> ValveDesignPoint:
    return valve_unit_mass(
        d,
        cycle_time,
        params.material(material),
        params.material(params.valve_design.reference_material),
        params.valve_design,
    )


def mass_map(
    d_range: tuple[float, float],
    dt_range: tuple[float, float],
    material: MaterialSpec,
    reference: MaterialSpec,
    resolution: int | tuple[int, int] = 25,
    constants: ValveDesignConstants = ValveDesignConstants(),
) -> list[list[ValveDesignPoint]]:
    """Grid of design points, rows over bore diameter, columns over cycle time.

    A resolution of 1 along an axis evaluates only the lower bound.
    """
    n_d, n_t = (resolution, resolution) if isinstance(resolution, int) else resolution
    if n_d < 1 or n_t < 1:
        raise ValueError("grid resolution must be >= 1")
    if min(d_range) <= 0 or min(dt_range) <= 0:
        raise ValueError("ranges must be positive")
    ds = np.linspace(d_range[0], d_range[1], n_d) if n_d > 1 else np.array([d_range[0]])
    ts = np.linspace(dt_range[0], dt_range[1], n_t) if n_t > 1 else np.array([dt_range[0]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid = [
            [valve_unit_mass(float(d), float(t), material, reference, constants) for t in ts]
            for d in ds
        ]
    if caught:
        warnings.warn(
            f"{len(caught)} grid evaluations extrapolate the empirical fits", stacklevel=2
        )
    return grid


MASS_MAP_COLUMNS = (
    "d_m",
    "dt_s",
    "mass_motor_kg",
    "mass_gearbox_kg",
    "mass_body_kg",
    "mass_total_kg",
)


def write_mass_map_csv(grid: Iterable[Iterable[ValveDesignPoint]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MASS_MAP_COLUMNS)
        for row in grid:
            for p in row:
                w.writerow(
                    [
                        repr(p.d),
                        repr(p.cycle_time),
                        repr(p.mass_motor),
                        repr(p.mass_gearbox),
                        repr(p.mass_body),
                        repr(p.mass_total),
                    ]
                )


def read_mass_map_csv(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MASS_MAP_COLUMNS:
            raise ValueError(f"unexpected mass map columns {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]
