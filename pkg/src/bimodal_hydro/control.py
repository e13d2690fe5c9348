"""Mode state machine, contact detection and low-level loops.

EM1 is current controlled, EM2 is velocity controlled through a PID, and the
valves are position controlled by their servos. A scripted high-level
controller supplies a mode request plus a current reference (HS) and a
velocity reference (HF); the downshift itself is triggered by ground contact.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .params import ActuatorParams, ContactThresholds, PIDGains
from .valve import FULLY_CLOSED

log = logging.getLogger(__name__)


class ControlMode(str, enum.Enum):
    HS = "HS"
    DOWNSHIFTING = "DOWNSHIFTING"
    HF = "HF"
    UPSHIFTING = "UPSHIFTING"
    BRAKING = "BRAKING"


class ModeRequest(str, enum.Enum):
    HS = "HS"
    HF = "HF"
    BRAKE = "BRAKE"


ALLOWED_EDGES = frozenset(
    {
        (ControlMode.HS, ControlMode.DOWNSHIFTING),
        (ControlMode.DOWNSHIFTING, ControlMode.HF),
        (ControlMode.HF, ControlMode.UPSHIFTING),
        (ControlMode.UPSHIFTING, ControlMode.HS),
        (ControlMode.HS, ControlMode.BRAKING),
        (ControlMode.BRAKING, ControlMode.HS),
    }
)


@dataclass(frozen=True)
class ControlCommand:
    i1: float  # A, EM1 current
    w2: float  # rad/s, EM2 velocity setpoint
    phi: float  # rad, valve angle setpoint

    def saturated(self, i1_max: float, w2_max: float) -> "ControlCommand":
        return ControlCommand(
            min(max(self.i1, -i1_max), i1_max),
            min(max(self.w2, -w2_max), w2_max),
            min(max(self.phi, 0.0), FULLY_CLOSED),
        )


@dataclass(frozen=True)
class SensorFrame:
    timestamp: float
    knee_position: float  # m, slave piston
    knee_velocity: float  # m/s
    slave_pressure: float  # Pa
    x1: float
    x2: float
    valve_angle: float
    v1: float = 0.0
    v2: float = 0.0


@dataclass(frozen=True)
class HighLevelRefs:
    request: ModeRequest = ModeRequest.HS
    current: float = 0.0  # A, EM1 reference used in HS
    velocity: float = 0.0  # m/s at the output piston, used in HF


@dataclass(frozen=True)
class Events:
    contact: bool = False
    valve_closed: bool = False
    valve_open: bool = False
    request: ModeRequest | None = None


@dataclass(frozen=True)
class ModeRefs:
    """Everything the state machine needs to form a command for any mode."""

    current: float = 0.0  # A, high-level EM1 reference
    w2: float = 0.0  # rad/s, high-level EM2 reference
    hold_current: float = 0.0  # A, EM1 current held through the downshift
    i1_track: float = 0.0  # A, EM1 stroke tracking output (HF side)
    w2_track: float = 0.0  # rad/s, EM2 stroke tracking output (HS side)
    braking_angle: float = math.pi / 4


@dataclass(frozen=True)
class Transition:
    mode: ControlMode
    command: ControlCommand
    diagnostic: str | None = None


# --- contact detection -----------------------------------------------------


def detect_contact(window: Sequence[SensorFrame], thresholds: ContactThresholds) -> bool:
    """Ground contact: sustained slave pressure while the knee velocity collapses.

    The last ``n_consec`` frames must all exceed the pressure threshold, and
    the current knee velocity must sit at least ``velocity_drop`` below the
    highest velocity seen in the window (the output is being stopped while
    it is pushing).
    """
    n = thresholds.n_consec
    if len(window) < n:
        return False
    if not all(f.slave_pressure > thresholds.pressure_threshold for f in window[-n:]):
        return False
    peak = max(f.knee_velocity for f in window)
    return peak - window[-1].knee_velocity > thresholds.velocity_drop


class ContactDetector:
    """Sliding-window contact detector, latched until reset."""

    def __init__(self, thresholds: ContactThresholds):
        self.thresholds = thresholds
        self.window: deque[SensorFrame] = deque(maxlen=thresholds.window)
        self.latched = False
        self.fired_at: float | None = None

    def update(self, frame: SensorFrame) -> bool:
        if self.window and frame.timestamp <= self.window[-1].timestamp:
            raise ValueError("sensor timestamps must increase")
        self.window.append(frame)
        if not self.latched and detect_contact(list(self.window), self.thresholds):
            self.latched = True
            self.fired_at = frame.timestamp
        return self.latched

    def reset(self) -> None:
        self.latched = False
        self.window.clear()


# --- PID ---------------------------------------------------------------------


@dataclass(frozen=True)
class PIDState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_step(
    setpoint: float,
    measurement: float,
    state: PIDState,
    gains: PIDGains,
    dt: float,
    limit: float = math.inf,
) -> tuple[float, PIDState]:
    """One PID update with output clamping and conditional-integration anti-windup.

    When the unclamped output is saturated and the error pushes further into
    saturation the integrator is frozen.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    error = setpoint - measurement
    deriv = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    candidate = state.integral + error * dt
    u = gains.kp * error + gains.ki * candidate + gains.kd * deriv
    integral = candidate
    if abs(u) > limit and gains.ki * error * u > 0:
        integral = state.integral
        u = gains.kp * error + gains.ki * integral + gains.kd * deriv
    u = min(max(u, -limit), limit)
    return u, PIDState(integral, error)


# --- state machine ---------------------------------------------------------


def command_for(mode: ControlMode, refs: ModeRefs) -> ControlCommand:
    if mode is ControlMode.HS:
        return ControlCommand(refs.current, refs.w2_track, 0.0)
    if mode is ControlMode.DOWNSHIFTING:
        return ControlCommand(refs.hold_current, refs.w2, FULLY_CLOSED)
    if mode is ControlMode.HF:
        return ControlCommand(refs.i1_track, refs.w2, FULLY_CLOSED)
    if mode is ControlMode.UPSHIFTING:
        return ControlCommand(refs.i1_track, refs.w2, 0.0)
    return ControlCommand(0.0, 0.0, refs.braking_angle)


def next_mode(mode: ControlMode, events: Events) -> tuple[ControlMode, str | None]:
    req = events.request
    if mode is ControlMode.HS:
        if req is ModeRequest.BRAKE:
            return ControlMode.BRAKING, None
        if events.contact:
            return ControlMode.DOWNSHIFTING, None
        return mode, None
    if mode is ControlMode.DOWNSHIFTING:
        if events.valve_closed:
            return ControlMode.HF, None
        if req not in (None, ModeRequest.HF):
            return mode, f"request {req.value} rejected while downshifting"
        return mode, None
    if mode is ControlMode.HF:
        if req is ModeRequest.HS:
            return ControlMode.UPSHIFTING, None
        if req is ModeRequest.BRAKE:
            return mode, "request BRAKE rejected in HF (no HF->BRAKING edge)"
        return mode, None
    if mode is ControlMode.UPSHIFTING:
        if events.valve_open:
            return ControlMode.HS, None
        if req not in (None, ModeRequest.HS):
            return mode, f"request {req.value} rejected while upshifting"
        return mode, None
    # BRAKING
    if req is ModeRequest.HS:
        return ControlMode.HS, None
    if req is ModeRequest.HF:
        return mode, "request HF rejected while braking (release to HS first)"
    return mode, None


def step_state_machine(mode: ControlMode, events: Events, refs: ModeRefs) -> Transition:
    """Advance the mode graph by at most one edge and form the command."""
    new_mode, diagnostic = next_mode(mode, events)
    if new_mode is not mode:
        assert (mode, new_mode) in ALLOWED_EDGES
    return Transition(new_mode, command_for(new_mode, refs), diagnostic)


# --- controller --------------------------------------------------------------


class VelocityDrive:
    """EM2 low-level velocity PID producing a current."""

    def __init__(self, gains: PIDGains, current_limit: float, dt: float):
        self.gains = gains
        self.limit = current_limit
        self.dt = dt
        self.state = PIDState()

    def update(self, w_cmd: float, w_meas: float) -> float:
        i, self.state = pid_step(w_cmd, w_meas, self.state, self.gains, self.dt, self.limit)
        return i


@dataclass
class ControllerLog:
    transitions: list[tuple[float, ControlMode, ControlMode]] = field(default_factory=list)
    diagnostics: list[tuple[float, str]] = field(default_factory=list)
    contact_times: list[float] = field(default_factory=list)


class Controller:
    """Sequential controller sampled at the control rate."""

    def __init__(self, params: ActuatorParams, mode: ControlMode = ControlMode.HS):
        self.params = params
        cfg = params.control
        self.dt = 1.0 / cfg.rate_hz
        self.mode = mode
        self.detector = ContactDetector(cfg.contact)
        self.em2 = VelocityDrive(cfg.em2_velocity, params.line2.max_current, self.dt)
        self.stroke_state = PIDState()
        self.hold_current = 0.0
        self.last_refs = HighLevelRefs()
        self.log = ControllerLog()
        self._last_diag: str | None = None

    def update(self, frame: SensorFrame, refs: HighLevelRefs) -> tuple[ControlCommand, float]:
        """Return the saturated command and the EM2 current for this tick."""
        p = self.params
        l1, l2 = p.line1, p.line2
        valve_tol = p.valve.closed_tolerance
        contact = self.detector.update(frame)
        if contact and self.detector.fired_at == frame.timestamp:
            self.log.contact_times.append(frame.timestamp)

        if self.mode is ControlMode.HS:
            # Force-holding current for a downshift is the latest HS reference.
            self.hold_current = min(max(refs.current, -l1.max_current), l1.max_current)

        v2_track = p.control.stroke_hs_gain * (frame.x1 - frame.x2)
        v2_track = min(max(v2_track, -l2.max_velocity), l2.max_velocity)
        i1_track, next_stroke = pid_step(
            frame.x2, frame.x1, self.stroke_state, p.control.stroke_hf, self.dt, l1.max_current
        )
        mode_refs = ModeRefs(
            current=refs.current,
            w2=refs.velocity * l2.transformation_ratio,
            hold_current=self.hold_current,
            i1_track=i1_track,
            w2_track=v2_track * l2.transformation_ratio,
            braking_angle=math.radians(p.control.braking_angle_deg),
        )
        events = Events(
            contact=contact,
            valve_closed=frame.valve_angle >= FULLY_CLOSED - valve_tol,
            valve_open=frame.valve_angle <= 1e-9,
            request=refs.request,
        )
        tr = step_state_machine(self.mode, events, mode_refs)
        if tr.diagnostic and tr.diagnostic != self._last_diag:
            log.info("t=%.4f s: %s", frame.timestamp, tr.diagnostic)
            self.log.diagnostics.append((frame.timestamp, tr.diagnostic))
        self._last_diag = tr.diagnostic
        if tr.mode is not self.mode:
            self.log.transitions.append((frame.timestamp, self.mode, tr.mode))
            if tr.mode is ControlMode.HS and self.mode is ControlMode.UPSHIFTING:
                self.detector.reset()
            self.mode = tr.mode
        # Stroke tracker only integrates while it is in charge of EM1.
        if self.mode in (ControlMode.HF, ControlMode.UPSHIFTING):
            self.stroke_state = next_stroke
        else:
            self.stroke_state = PIDState()
        cmd = tr.command.saturated(l1.max_current, l2.max_speed)
        i2 = self.em2.update(cmd.w2, frame.v2 * l2.transformation_ratio)
        self.last_refs = refs
        return cmd, i2


# --- high-level scripts ------------------------------------------------------


@dataclass(frozen=True)
class GaitScript:
    """Hard-coded gait-like sequence: swing, impact wait, lift up/down, retract."""

    swing_current: float = 10.22  # A, about 300 N in HS
    swing_end: float = 0.04
    lift_start: float = 0.40
    lift_velocity: float = 0.02  # m/s at the output piston
    lift_up_duration: float = 0.5
    lift_down_duration: float = 0.45
    retract_start: float = 1.50
    retract_current: float = 6.0  # A
    retract_push_start: float = 1.70
    retract_pulse: float = 0.06  # s, each of the accelerate and brake pulses

    def __call__(self, t: float) -> HighLevelRefs:
        if t < 0:
            raise ValueError("t must be >= 0")
        if t < self.swing_end:
            return HighLevelRefs(ModeRequest.HS, self.swing_current, 0.0)
        if t < self.retract_start:
            velocity = 0.0
            up_end = self.lift_start + self.lift_up_duration
            if self.lift_start <= t < up_end:
                velocity = self.lift_velocity
            elif up_end <= t < up_end + self.lift_down_duration:
                velocity = -self.lift_velocity
            return HighLevelRefs(ModeRequest.HF, self.swing_current, velocity)
        current = 0.0
        t0 = self.retract_push_start
        if t0 <= t < t0 + self.retract_pulse:
            current = -self.retract_current
        elif t0 + self.retract_pulse <= t < t0 + 2 * self.retract_pulse:
            current = self.retract_current
        return HighLevelRefs(ModeRequest.HS, current, 0.0)

    def phase(self, t: float) -> str:
        if t < self.swing_end:
            return "swing"
        if t < self.lift_start:
            return "impact-wait"
        if t < self.retract_start:
            return "lift"
        return "retract"


DEFAULT_GAIT = GaitScript()


def gait_script(t: float, script: GaitScript = DEFAULT_GAIT) -> HighLevelRefs:
    return script(t)


@dataclass(frozen=True)
class SwingScript:
    """Swing in the air: accelerate, brake, coast."""

    current: float = 8.0
    push_duration: float = 0.04
    brake_duration: float = 0.04

    def __call__(self, t: float) -> HighLevelRefs:
        if t < self.push_duration:
            return HighLevelRefs(ModeRequest.HS, self.current, 0.0)
        if t < self.push_duration + self.brake_duration:
            return HighLevelRefs(ModeRequest.HS, -self.current, 0.0)
        return HighLevelRefs(ModeRequest.HS, 0.0, 0.0)


@dataclass(frozen=True)
class LiftScript:
    """HF only: lift the payload then lower it."""

    velocity: float = 0.02
    start: float = 0.1
    up_duration: float = 0.5
    down_duration: float = 0.45

    def __call__(self, t: float) -> HighLevelRefs:
        v = 0.0
        if self.start <= t < self.start + self.up_duration:
            v = self.velocity
        elif self.start + self.up_duration <= t < self.start + self.up_duration + self.down_duration:
            v = -self.velocity
        return HighLevelRefs(ModeRequest.HF, 0.0, v)


@dataclass(frozen=True)
class BrakeScript:
    """Hold the valves at the braking angle for the whole run."""

    def __call__(self, t: float) -> HighLevelRefs:
        return HighLevelRefs(ModeRequest.BRAKE, 0.0, 0.0)


SCRIPTS = {
    "gait": GaitScript,
    "swing": SwingScript,
    "lift": LiftScript,
    "brake": BrakeScript,
}


def make_script(kind: str, **kwargs: float):
    try:
        cls = SCRIPTS[kind]
    except KeyError:
        raise ValueError(f"unknown script {kind!r}; expected one of {sorted(SCRIPTS)}") from None
    return cls(**kwargs)


def reachable_edges(modes: Iterable[ControlMode] = tuple(ControlMode)) -> set[tuple[ControlMode, ControlMode]]:
    """Every (mode, next mode) pair produced by any event combination."""
    out = set()
    requests = (None, *ModeRequest)
    for mode in modes:
        for contact in (False, True):
            for closed in (False, True):
                for opened in (False, True):
                    for req in requests:
                        nm, _ = next_mode(mode, Events(contact, closed, opened, req))
                        out.add((mode, nm))
    return out
