"""Fixed-step hybrid simulation of actuator, valves and controller.

The continuous dynamics are integrated with classical RK4 at a fixed step.
The controller runs at its own rate with a zero-order hold on its outputs;
the valve angle follows its rate limiter exactly inside each step. Regime
swaps (valve path open/closed), ground contact and lift-off are applied at
step boundaries as velocity projections, and the energy they remove or
inject is booked in the ledger so the audit stays closed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .control import ControlCommand, Controller, HighLevelRefs, SensorFrame
from .dynamics import CLOSED, OPEN, ContinuousState, generalized_accel, regime_for
from .params import ActuatorParams, ConfigError, LoadScenario
from .scenarios import Scenario, check_against
from .valve import FULLY_CLOSED, loss_coefficient, step_valve


class SimulationInstability(RuntimeError):
    pass


# Indices into the integrated state vector.
XO, X1, X2, VO, V1 = range(5)
W_M1, W_M2, W_FE, D_VISC, D_THR, D_STOP, ABS_M1, ABS_M2, ABS_FE = range(5, 14)
N_Y = 14

TRACE_COLUMNS = (
    "t_s",
    "mode",
    "x_o_m",
    "v_o_mps",
    "x1_m",
    "v1_mps",
    "x2_m",
    "v2_mps",
    "phi_rad",
    "I1_A",
    "w2_cmd_radps",
    "F_out_N",
    "P_Pa",
    "P_throttle_W",
    "E_residual_J",
)
_EXTRA_COLUMNS = (
    "I2_A",
    "phi_cmd_rad",
    "regime",
    "load",
    "W_motor1_J",
    "W_motor2_J",
    "W_ext_J",
    "D_viscous_J",
    "D_throttle_J",
    "D_stop_J",
    "E_events_J",
    "E_mech_J",
    "gross_J",
    "throttle_force_N",
    "P_motor_W",
    "P_ext_W",
)


def impact_coupling(
    load_velocity: float, piston: ContinuousState, force_ratio: float, regime: str = OPEN
) -> ContinuousState:
    """Map the load velocity onto the output piston at contact.

    The output piston takes ``load_velocity / force_ratio``. With the valve
    path open M2 keeps its velocity (its reflected inertia dominates) and M1
    absorbs the difference; with it closed M1 is decoupled and keeps its own.
    """
    if force_ratio <= 0:
        raise ValueError("force ratio must be > 0")
    v_o = load_velocity / force_ratio
    if regime == CLOSED:
        v1 = piston.v1
    else:
        v2 = piston.v_o - piston.v1
        v1 = v_o - v2
    return ContinuousState(piston.x_o, piston.x1, piston.x2, v_o, v1, piston.valve_angle)


@dataclass
class _Load:
    scenario: LoadScenario
    support: float | None = None  # position of the load support, if engaged


@dataclass
class SimTrace:
    scenario: str
    dt: float
    sample_interval: float
    columns: dict[str, list[Any]]
    events: list[tuple[float, str]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.columns["t_s"])

    def column(self, name: str) -> list[Any]:
        return self.columns[name]

    def event_times(self, kind: str) -> list[float]:
        return [t for t, k in self.events if k == kind]

    def write_csv(self, path: str | Path, extended: bool = False) -> None:
        names = TRACE_COLUMNS + (_EXTRA_COLUMNS if extended else ())
        cols = [self.columns[n] for n in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([v if isinstance(v, str) else repr(v) for v in row])


def read_trace_csv(path: str | Path) -> dict[str, list[Any]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        if tuple(names[: len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns {names}")
        out: dict[str, list[Any]] = {n: [] for n in names}
        for row in reader:
            for n in names:
                v = row[n]
                out[n].append(v if n in ("mode", "regime", "load") else float(v))
    return out


class Simulation:
    """Mutable simulation state; advance with :meth:`step`."""

    def __init__(self, scenario: Scenario, params: ActuatorParams, dt: float | None = None):
        if params.fluid.compliance_enabled:
            raise NotImplementedError(
                "fluid.compliance_enabled: the compliant-line extension is not implemented"
            )
        check_against(scenario, params)
        self.params = params
        self.scenario = scenario
        self.dt = float(dt if dt is not None else scenario.dt if scenario.dt else params.sim_dt)
        control_period = 1.0 / params.control.rate_hz
        ratio = control_period / self.dt
        self.substeps_per_tick = int(round(ratio))
        if self.substeps_per_tick < 1 or abs(ratio - self.substeps_per_tick) > 1e-9 * ratio:
            raise ConfigError(
                f"dt = {self.dt:g} s must divide the control period {control_period:g} s"
            )
        interval = scenario.trace_interval or control_period
        self.trace_every = max(1, int(round(interval / self.dt)))

        s = scenario.initial
        self.y = [0.0] * N_Y
        self.y[XO], self.y[X1], self.y[X2] = s.x_o, s.x1, s.x2
        self.y[VO], self.y[V1] = s.v_o, s.v1
        self.phi = s.valve_angle
        self.regime = regime_for(self.phi, params.valve)
        self.n = 0
        self.t = 0.0
        self.load = _Load(params.scenario(scenario.load))
        self.engaged = False
        self.script = scenario.make_script()
        self.controller = Controller(params, scenario.initial_mode)
        self.cmd = ControlCommand(0.0, 0.0, self.phi)
        self.i2 = 0.0
        self.refs = HighLevelRefs()
        self.e_events = 0.0
        self.abs_events = 0.0  # magnitudes of booked event energies, for the throughput
        self.events: list[tuple[float, str]] = []
        self.contact_time: float | None = None
        self.release_time: float | None = None
        self.peak_throttle_force = 0.0
        self.peak_throttle_power = 0.0
        self._prev_x_o = s.x_o
        self._last_f_out = 0.0

        c = scenario.contact
        ratio_r = params.analysis.force_ratio
        self.force_ratio = c.force_ratio if c and c.force_ratio else ratio_r
        st = params.stroke
        self.contact_k = c.stop_stiffness if c and c.stop_stiffness is not None else st.stop_stiffness
        self.contact_c = c.stop_damping if c and c.stop_damping is not None else st.stop_damping

        self._check_contact()
        self.e0 = self.mechanical_energy()
        self.columns: dict[str, list[Any]] = {n: [] for n in TRACE_COLUMNS + _EXTRA_COLUMNS}

    # --- dynamics ------------------------------------------------------------

    def _eval(self, y: list[float], phi: float, regime: str, i1: float, i2: float):
        """Derivative of the integrated vector plus diagnostic forces."""
        p = self.params
        l1, l2, st = p.line1, p.line2, p.stroke
        load = self.load.scenario
        x_o, x1, x2, v_o, v1 = y[XO], y[X1], y[X2], y[VO], y[V1]
        v2 = v_o if regime == CLOSED else v_o - v1
        k, c = st.stop_stiffness, st.stop_damping

        f_stop_o, d_stop = _stop(x_o, v_o, 0.0, st.output, k, c)
        f_stop_1, d1 = _stop(x1, v1, 0.0, st.line1, k, c)
        f_stop_2, d2 = _stop(x2, v2, 0.0, st.line2, k, c)
        d_stop += d1 + d2
        if self.load.support is not None:
            f_sup, d_sup = _stop(x_o, v_o, self.load.support, math.inf, self.contact_k, self.contact_c)
            f_stop_o += f_sup
            d_stop += d_sup

        f1 = l1.force(i1)
        f2 = l2.force(i2)
        f_o = -load.output_loss * v_o - load.external_force + f_stop_o
        f_1 = f1 - l1.viscous_loss * v1 + f_stop_1
        b = 0.0
        if regime == OPEN:
            b = 0.5 * loss_coefficient(phi, p.valve) * p.fluid.density * p.valve.bore_area * v1 * abs(v1)
            f_1 -= b
        f_2 = f2 - l2.viscous_loss * v2 + f_stop_2
        a_o, a_1 = generalized_accel(
            regime, load.output_mass, l1.reflected_mass, l2.reflected_mass, f_o, f_1, f_2
        )
        p1, p2, pfe = f1 * v1, f2 * v2, load.external_force * v_o
        d_visc = load.output_loss * v_o * v_o + l1.viscous_loss * v1 * v1 + l2.viscous_loss * v2 * v2
        dy = (
            v_o, v1, v2, a_o, a_1,
            p1, p2, pfe, d_visc, b * v1, d_stop, abs(p1), abs(p2), abs(pfe),
        )
        return dy, a_o, f_o, b

    def potential_energy(self, y: list[float] | None = None) -> float:
        y = self.y if y is None else y
        st = self.params.stroke
        pe = 0.0
        for x, upper in ((y[XO], st.output), (y[X1], st.line1), (y[X2], st.line2)):
            if x < 0.0:
                pe += 0.5 * st.stop_stiffness * x * x
            elif x > upper:
                pe += 0.5 * st.stop_stiffness * (x - upper) ** 2
        if self.load.support is not None and y[XO] < self.load.support:
            pe += 0.5 * self.contact_k * (self.load.support - y[XO]) ** 2
        return pe

    def kinetic_energy(self, y: list[float] | None = None) -> float:
        y = self.y if y is None else y
        v_o, v1 = y[VO], y[V1]
        v2 = v_o if self.regime == CLOSED else v_o - v1
        return 0.5 * (
            self.load.scenario.output_mass * v_o * v_o
            + self.params.line1.reflected_mass * v1 * v1
            + self.params.line2.reflected_mass * v2 * v2
        )

    def mechanical_energy(self) -> float:
        return self.kinetic_energy() + self.potential_energy()

    @property
    def v2(self) -> float:
        return self.y[VO] if self.regime == CLOSED else self.y[VO] - self.y[V1]

    def state(self) -> ContinuousState:
        y = self.y
        return ContinuousState(y[XO], y[X1], y[X2], y[VO], y[V1], self.phi)

    # --- events --------------------------------------------------------------

    def _book(self, e_before: float, kind: str) -> None:
        delta = self.mechanical_energy() - e_before
        self.e_events += delta
        self.abs_events += abs(delta)
        self.events.append((self.t, kind))

    def _swap_regime(self, new: str) -> None:
        e_before = self.mechanical_energy()
        m_o = self.load.scenario.output_mass
        m1 = self.params.line1.reflected_mass
        m2 = self.params.line2.reflected_mass
        v_o, v1 = self.y[VO], self.y[V1]
        if new == CLOSED:
            v2 = v_o - v1
            self.y[VO] = (m_o * v_o + m2 * v2) / (m_o + m2)
        else:
            v2 = v_o
            gap = v_o - v1 - v2
            lam = -gap / (1.0 / m_o + 1.0 / m1 + 1.0 / m2)
            self.y[VO] = v_o + lam / m_o
            self.y[V1] = v1 - lam / m1
        self.regime = new
        self._book(e_before, f"regime_{new}")

    def _engage(self) -> None:
        c = self.scenario.contact
        e_before = self.mechanical_energy()
        coupled = impact_coupling(c.load_velocity, self.state(), self.force_ratio, self.regime)
        self.y[VO], self.y[V1] = coupled.v_o, coupled.v1
        self.load = _Load(
            self.params.scenario(c.load),
            (c.position if c.position is not None else self.y[XO]) if c.support else None,
        )
        self.engaged = True
        self.contact_time = self.t
        self._book(e_before, "contact")

    def _release(self) -> None:
        e_before = self.mechanical_energy()
        self.load = _Load(self.params.scenario(self.scenario.load))
        self.engaged = False
        self.release_time = self.t
        self._book(e_before, "release")

    def _check_contact(self) -> None:
        c = self.scenario.contact
        if c is None or self.engaged or self.contact_time is not None:
            return
        if c.time is not None:
            if self.t >= c.time - 1e-12:
                self._engage()
        elif self._prev_x_o < c.position <= self.y[XO]:
            self._engage()

    # --- control ---------------------------------------------------------------

    def _output_force(self) -> tuple[float, float]:
        _, a_o, f_o, b = self._eval(self.y, self.phi, self.regime, self.cmd.i1, self.i2)
        return self.load.scenario.output_mass * a_o - f_o, b

    def _control_tick(self) -> None:
        f_out, _ = self._output_force()
        y = self.y
        frame = SensorFrame(
            timestamp=self.t,
            knee_position=y[XO],
            knee_velocity=y[VO],
            slave_pressure=f_out / self.params.fluid.cylinder_area,
            x1=y[X1],
            x2=y[X2],
            valve_angle=self.phi,
            v1=y[V1],
            v2=self.v2,
        )
        c = self.scenario.contact
        if (
            self.engaged
            and c is not None
            and c.release
            and self.load.support is not None
            and y[XO] <= self.load.support
            and f_out < 0.0
        ):
            self._release()
        self.refs = self.script(self.t)
        self.cmd, self.i2 = self.controller.update(frame, self.refs)

    # --- stepping ----------------------------------------------------------------

    def step(self) -> None:
        """Advance one integration step (control tick first when one is due)."""
        if self.n % self.substeps_per_tick == 0:
            self._control_tick()
        if self.n % self.trace_every == 0:
            self._record()
        dt = self.dt
        y0 = self.y
        phi0 = self.phi
        spec = self.params.valve
        phi_cmd = self.cmd.phi
        phi_half = step_valve(phi_cmd, phi0, 0.5 * dt, spec)
        phi_end = step_valve(phi_cmd, phi0, dt, spec)
        i1, i2, regime = self.cmd.i1, self.i2, self.regime

        k1, _, _, _ = self._eval(y0, phi0, regime, i1, i2)
        y1 = [a + 0.5 * dt * b for a, b in zip(y0, k1)]
        k2, _, _, _ = self._eval(y1, phi_half, regime, i1, i2)
        y2 = [a + 0.5 * dt * b for a, b in zip(y0, k2)]
        k3, _, _, _ = self._eval(y2, phi_half, regime, i1, i2)
        y3 = [a + dt * b for a, b in zip(y0, k3)]
        k4, _, _, _ = self._eval(y3, phi_end, regime, i1, i2)
        self.y = [
            a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
        ]
        self._prev_x_o = y0[XO]
        self.n += 1
        self.t = self.n * dt
        self.phi = phi_end

        if phi0 == 0.0 and phi_end > 0.0:
            self.events.append((self.t - dt, "valve_leaves_open"))
        elif phi0 == FULLY_CLOSED and phi_end < FULLY_CLOSED:
            self.events.append((self.t - dt, "valve_leaves_closed"))
        if phi_end == FULLY_CLOSED and phi0 < FULLY_CLOSED:
            self.events.append((self.t, "valve_fully_closed"))
        elif phi_end == 0.0 and phi0 > 0.0:
            self.events.append((self.t, "valve_fully_open"))

        if not all(math.isfinite(v) for v in self.y) or abs(self.y[VO]) > 1e3 or abs(self.y[V1]) > 1e3:
            raise SimulationInstability(
                f"non-finite or runaway state at t = {self.t:.6f} s "
                f"(mode {self.controller.mode.value}, regime {self.regime}): {self.y[:5]}"
            )

        new_regime = regime_for(self.phi, spec)
        if new_regime != self.regime:
            self._swap_regime(new_regime)
        self._check_contact()

        if self.regime == OPEN:
            v1 = self.y[V1]
            b = 0.5 * loss_coefficient(self.phi, spec) * self.params.fluid.density * spec.bore_area * v1 * abs(v1)
            self.peak_throttle_force = max(self.peak_throttle_force, abs(b))
            self.peak_throttle_power = max(self.peak_throttle_power, b * v1)

    def ledger(self) -> dict[str, float]:
        y = self.y
        return {
            "W_motor1_J": y[W_M1],
            "W_motor2_J": y[W_M2],
            "W_ext_J": y[W_FE],
            "D_viscous_J": y[D_VISC],
            "D_throttle_J": y[D_THR],
            "D_stop_J": y[D_STOP],
            "E_events_J": self.e_events,
            "E_mech_J": self.mechanical_energy(),
            "E_mech0_J": self.e0,
            "gross_J": y[ABS_M1] + y[ABS_M2] + y[ABS_FE] + y[D_VISC] + y[D_THR] + y[D_STOP]
            + self.abs_events + self.e0,
        }

    def residual(self) -> float:
        lg = self.ledger()
        supplied = lg["W_motor1_J"] + lg["W_motor2_J"] - lg["W_ext_J"] + lg["E_events_J"]
        lost = lg["D_viscous_J"] + lg["D_throttle_J"] + lg["D_stop_J"]
        return (lg["E_mech_J"] - lg["E_mech0_J"]) - (supplied - lost)

    def _record(self) -> None:
        y = self.y
        f_out, b = self._output_force()
        lg = self.ledger()
        cols = self.columns
        v2 = self.v2
        values = {
            "t_s": self.t,
            "mode": self.controller.mode.value,
            "x_o_m": y[XO],
            "v_o_mps": y[VO],
            "x1_m": y[X1],
            "v1_mps": y[V1],
            "x2_m": y[X2],
            "v2_mps": v2,
            "phi_rad": self.phi,
            "I1_A": self.cmd.i1,
            "w2_cmd_radps": self.cmd.w2,
            "F_out_N": f_out,
            "P_Pa": f_out / self.params.fluid.cylinder_area,
            "P_throttle_W": b * y[V1],
            "E_residual_J": self.residual(),
            "I2_A": self.i2,
            "phi_cmd_rad": self.cmd.phi,
            "regime": self.regime,
            "load": self.load.scenario.label,
            "W_motor1_J": lg["W_motor1_J"],
            "W_motor2_J": lg["W_motor2_J"],
            "W_ext_J": lg["W_ext_J"],
            "D_viscous_J": lg["D_viscous_J"],
            "D_throttle_J": lg["D_throttle_J"],
            "D_stop_J": lg["D_stop_J"],
            "E_events_J": lg["E_events_J"],
            "E_mech_J": lg["E_mech_J"],
            "gross_J": lg["gross_J"],
            "throttle_force_N": b,
            "P_motor_W": self.params.line1.force(self.cmd.i1) * y[V1]
            + self.params.line2.force(self.i2) * v2,
            "P_ext_W": self.load.scenario.external_force * y[VO],
        }
        for k, v in values.items():
            cols[k].append(v)

    def run(self) -> SimTrace:
        n_steps = int(round(self.scenario.duration / self.dt))
        for _ in range(n_steps):
            self.step()
        if self.n % self.trace_every == 0:
            self._record()
        trace = SimTrace(
            scenario=self.scenario.name,
            dt=self.dt,
            sample_interval=self.trace_every * self.dt,
            columns=self.columns,
            events=sorted(self.events + self._controller_events()),
        )
        trace.summary = summarize(self, trace)
        return trace

    def _controller_events(self) -> list[tuple[float, str]]:
        out = [(t, f"mode_{b.value}") for t, _, b in self.controller.log.transitions]
        out += [(t, "contact_detected") for t in self.controller.log.contact_times]
        return out


def _stop(x: float, v: float, lower: float, upper: float, k: float, c: float) -> tuple[float, float]:
    """End-stop force and dissipated power (see dynamics.stop_force)."""
    if x < lower:
        delta = lower - x
        f = k * delta - c * v
        if f < 0.0:
            f = 0.0
        return f, (k * delta - f) * v
    if x > upper:
        delta = x - upper
        f = k * delta + c * v
        if f < 0.0:
            f = 0.0
        return -f, (f - k * delta) * v
    return 0.0, 0.0


def step(sim: Simulation, dt: float | None = None) -> Simulation:
    """Advance ``sim`` by one integration step."""
    if dt is not None and abs(dt - sim.dt) > 1e-15:
        raise ValueError("the step size is fixed when the simulation is created")
    sim.step()
    return sim


def run_scenario(scenario: Scenario, params: ActuatorParams, dt: float | None = None) -> SimTrace:
    return Simulation(scenario, params, dt).run()


# --- post-processing -----------------------------------------------------------


@dataclass(frozen=True)
class EnergyLedger:
    motor1_work: float
    motor2_work: float
    external_work: float  # work done against f_e
    viscous: float
    throttle: float
    stops: float
    events: float  # net energy booked at contact, release and regime swaps
    kinetic_and_stored_change: float
    residual: float
    gross: float
    peak_throttle_power: float

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.gross if self.gross > 0 else 0.0

    @property
    def electrical_work(self) -> float:
        return self.motor1_work + self.motor2_work


def energy_audit(trace: SimTrace) -> EnergyLedger:
    """Close the energy balance over a finished trace."""
    c = trace.columns
    if len(trace) == 0:
        raise ValueError("empty trace")
    e_mech = c["E_mech_J"]
    delta = e_mech[-1] - e_mech[0]
    w1, w2, we = c["W_motor1_J"][-1], c["W_motor2_J"][-1], c["W_ext_J"][-1]
    dv, dth, dst = c["D_viscous_J"][-1], c["D_throttle_J"][-1], c["D_stop_J"][-1]
    ev = c["E_events_J"][-1] - c["E_events_J"][0]
    residual = delta - (w1 + w2 - we + ev - dv - dth - dst)
    return EnergyLedger(
        motor1_work=w1,
        motor2_work=w2,
        external_work=we,
        viscous=dv,
        throttle=dth,
        stops=dst,
        events=ev,
        kinetic_and_stored_change=delta,
        residual=residual,
        gross=c["gross_J"][-1],
        peak_throttle_power=max((p for p in c["P_throttle_W"]), default=0.0),
    )


def _first_after(times: list[float], t0: float) -> float | None:
    later = [t for t in times if t >= t0 - 1e-12]
    return min(later) if later else None


def summarize(sim: Simulation, trace: SimTrace) -> dict[str, Any]:
    ev = trace.events
    times = {kind: [t for t, k in ev if k == kind] for kind in {k for _, k in ev}}
    out: dict[str, Any] = {
        "scenario": trace.scenario,
        "dt_s": trace.dt,
        "contact_time_s": sim.contact_time,
        "release_time_s": sim.release_time,
        "peak_braking_force_N": sim.peak_throttle_force,
        "peak_throttle_power_W": sim.peak_throttle_power,
        "final_mode": sim.controller.mode.value,
        "diagnostics": [d for _, d in sim.controller.log.diagnostics],
    }
    detected = times.get("contact_detected", [])
    out["contact_detected_s"] = detected[0] if detected else None
    out["missed_contact"] = sim.contact_time is not None and sim.scenario.contact is not None \
        and sim.scenario.contact.position is not None and not detected

    down = times.get("mode_DOWNSHIFTING", [])
    if down:
        start = _first_after(times.get("valve_leaves_open", []), down[0])
        end = _first_after(times.get("valve_fully_closed", []), down[0])
        out["downshift_start_s"] = start
        out["downshift_duration_s"] = None if start is None or end is None else end - start
        swap = _first_after(times.get("regime_closed", []), down[0])
        out["hf_takeover_s"] = swap
        t = trace.columns["t_s"]
        f = trace.columns["F_out_N"]
        t0 = sim.contact_time if sim.contact_time is not None else down[0]
        t1 = swap if swap is not None else math.inf
        window = [fv for tv, fv in zip(t, f) if t0 <= tv < t1]
        out["min_force_during_downshift_N"] = min(window) if window else None
    up = times.get("mode_UPSHIFTING", [])
    if up:
        start = _first_after(times.get("valve_leaves_closed", []), up[0])
        end = _first_after(times.get("valve_fully_open", []), up[0])
        out["upshift_start_s"] = start
        out["upshift_duration_s"] = None if start is None or end is None else end - start

    ledger = energy_audit(trace)
    out["energy_residual_J"] = ledger.residual
    out["energy_residual_relative"] = ledger.relative_residual
    out["throttle_dissipation_J"] = ledger.throttle
    return out
