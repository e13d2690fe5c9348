"""Lumped-parameter dynamics of the two-master, one-slave hydrostatic circuit.

Generalised coordinates are the output (slave) piston position ``x_o`` and the
M1 piston position ``x1``. With the valve path open the fluid is
incompressible and ``v_o = v1 + v2``. With the valves closed M1 is switched to
the reservoir and moves freely while the output is rigidly tied to M2
(``v_o = v2``).

Sign convention: extension of every piston is positive. The external force
``f_e`` opposes extension when positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .params import ActuatorParams, FluidSpec, LoadScenario, ValveSpec
from .valve import FULLY_CLOSED, loss_coefficient

OPEN = "open"
CLOSED = "closed"


class SingularMassMatrix(ValueError):
    pass


class PressureRatingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ContinuousState:
    x_o: float = 0.0
    x1: float = 0.0
    x2: float = 0.0
    v_o: float = 0.0
    v1: float = 0.0
    valve_angle: float = 0.0


@dataclass(frozen=True)
class ActuationInput:
    i1: float = 0.0
    i2: float = 0.0
    valve_angle: float = 0.0


def regime_for(angle: float, valve: ValveSpec) -> str:
    """Closed once the valve is within the closure tolerance of 90 degrees."""
    return CLOSED if angle >= FULLY_CLOSED - valve.closed_tolerance else OPEN


def m2_velocity(v_o: float, v1: float, regime: str) -> float:
    return v_o if regime == CLOSED else v_o - v1


def mass_matrix_from(m_o: float, m1_reflected: float, m2_reflected: float) -> np.ndarray:
    return np.array(
        [
            [m_o + m2_reflected, -m2_reflected],
            [-m2_reflected, m1_reflected + m2_reflected],
        ]
    )


def mass_matrix(params: ActuatorParams, scenario: LoadScenario) -> np.ndarray:
    """Inertia matrix of the open-valve model in (v_o, v1) coordinates."""
    return mass_matrix_from(
        scenario.output_mass, params.line1.reflected_mass, params.line2.reflected_mass
    )


def is_singular(h: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = float(np.max(np.abs(h)))
    return scale == 0.0 or abs(float(np.linalg.det(h))) <= rtol * scale**2


def throttle_force(angle: float, v1: float, fluid: FluidSpec, valve: ValveSpec) -> float:
    """Dissipative force on the M1 piston from a partly closed valve.

    Returned with the sign of ``v1``; it enters the M1 equation with a minus
    sign, so it always opposes the M1 motion.
    """
    k = loss_coefficient(angle, valve)
    return 0.5 * k * fluid.density * valve.bore_area * v1 * abs(v1)


def generalized_accel(
    regime: str,
    m_o: float,
    m1: float,
    m2: float,
    f_o: float,
    f_1: float,
    f_2: float,
) -> tuple[float, float]:
    """Accelerations (dv_o/dt, dv1/dt) from the net forces acting on each body.

    ``m1``/``m2`` are reflected masses; ``f_o``, ``f_1``, ``f_2`` are the net
    non-inertial forces on the output, M1 and M2 pistons. In the open regime
    M2 moves with ``v_o - v1`` so its force maps to ``(f_2, -f_2)``.
    """
    if regime == CLOSED:
        return (f_o + f_2) / (m_o + m2), f_1 / m1
    q0 = f_o + f_2
    q1 = f_1 - f_2
    det = m_o * m1 + m_o * m2 + m1 * m2
    if det <= 0.0 or not math.isfinite(det):
        raise SingularMassMatrix(f"mass matrix is singular (det = {det!r})")
    a_o = ((m1 + m2) * q0 + m2 * q1) / det
    a_1 = (m2 * q0 + (m_o + m2) * q1) / det
    return a_o, a_1


def _body_forces(
    state: ContinuousState,
    inp: ActuationInput,
    params: ActuatorParams,
    scenario: LoadScenario,
    regime: str,
) -> tuple[float, float, float]:
    l1, l2 = params.line1, params.line2
    v2 = m2_velocity(state.v_o, state.v1, regime)
    f_o = -scenario.output_loss * state.v_o - scenario.external_force
    f_1 = l1.force(inp.i1) - l1.viscous_loss * state.v1
    if regime == OPEN:
        f_1 -= throttle_force(inp.valve_angle, state.v1, params.fluid, params.valve)
    f_2 = l2.force(inp.i2) - l2.viscous_loss * v2
    return f_o, f_1, f_2


def full_accel(
    state: ContinuousState,
    inp: ActuationInput,
    params: ActuatorParams,
    scenario: LoadScenario,
    constrained: bool = False,
) -> tuple[float, float]:
    """Solve the coupled two-DoF model for (dv_o/dt, dv1/dt).

    With ``constrained`` the M1 row is replaced by the constraint dv1/dt = 0
    (valve shut with M1 held), leaving only the output row to solve.
    """
    h = mass_matrix(params, scenario)
    if is_singular(h):
        raise SingularMassMatrix("mass matrix is singular")
    f_o, f_1, f_2 = _body_forces(state, inp, params, scenario, OPEN)
    rhs = np.array([f_o + f_2, f_1 - f_2])
    if constrained:
        return float(rhs[0] / h[0, 0]), 0.0
    a = np.linalg.solve(h, rhs)
    return float(a[0]), float(a[1])


def hf_accel(
    state: ContinuousState,
    inp: ActuationInput,
    params: ActuatorParams,
    scenario: LoadScenario,
) -> tuple[float, float]:
    """Valves closed: output driven by M2 alone; M1 moves freely on the reservoir."""
    f_o, f_1, f_2 = _body_forces(state, inp, params, scenario, CLOSED)
    return generalized_accel(
        CLOSED,
        scenario.output_mass,
        params.line1.reflected_mass,
        params.line2.reflected_mass,
        f_o,
        f_1,
        f_2,
    )


def hs_accel(
    state: ContinuousState,
    inp: ActuationInput,
    params: ActuatorParams,
    scenario: LoadScenario,
) -> float:
    """Reduced high-speed model, valid when M2's reflected mass dominates M1's."""
    l1 = params.line1
    b = throttle_force(inp.valve_angle, state.v1, params.fluid, params.valve)
    rhs = (
        l1.force(inp.i1)
        - b
        - scenario.external_force
        - scenario.output_loss * state.v_o
        - l1.viscous_loss * state.v1
    )
    return rhs / (scenario.output_mass + l1.reflected_mass)


def output_force_and_pressure(
    state: ContinuousState,
    inp: ActuationInput,
    params: ActuatorParams,
    scenario: LoadScenario,
    external: float = 0.0,
    warn: bool = True,
) -> tuple[float, float]:
    """Fluid force on the output piston and the corresponding line pressure.

    ``external`` is any additional force on the output piston (end stop or
    ground support), positive in the extension direction.
    """
    regime = regime_for(inp.valve_angle, params.valve)
    f_o, f_1, f_2 = _body_forces(state, inp, params, scenario, regime)
    f_o += external
    a_o, _ = generalized_accel(
        regime,
        scenario.output_mass,
        params.line1.reflected_mass,
        params.line2.reflected_mass,
        f_o,
        f_1,
        f_2,
    )
    force = scenario.output_mass * a_o - f_o
    pressure = force / params.fluid.cylinder_area
    if warn and abs(pressure) > params.fluid.pressure_rating:
        warnings.warn(
            f"line pressure {pressure / 1e6:.2f} MPa exceeds the "
            f"{params.fluid.pressure_rating / 1e6:.2f} MPa rating",
            PressureRatingWarning,
            stacklevel=2,
        )
    return force, pressure


def stop_force(
    x: float, v: float, lower: float, upper: float, stiffness: float, damping: float
) -> tuple[float, float, float]:
    """Unilateral spring-damper end stop.

    Returns (force on the body, stored spring energy, dissipated power). The
    force never pulls the body into the stop.
    """
    if x < lower:
        delta = lower - x
        f = max(0.0, stiffness * delta - damping * v)
        return f, 0.5 * stiffness * delta * delta, (stiffness * delta - f) * v
    if x > upper:
        delta = x - upper
        f = -max(0.0, stiffness * delta + damping * v)
        return f, 0.5 * stiffness * delta * delta, -(f + stiffness * delta) * v
    return 0.0, 0.0, 0.0
