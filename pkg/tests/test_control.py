import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bimodal_hydro.control import (
    ALLOWED_EDGES,
    ContactDetector,
    ControlCommand,
    ControlMode,
    Controller,
    Events,
    GaitScript,
    HighLevelRefs,
    LiftScript,
    ModeRefs,
    ModeRequest,
    PIDState,
    SensorFrame,
    SwingScript,
    command_for,
    detect_contact,
    make_script,
    next_mode,
    pid_step,
    reachable_edges,
    step_state_machine,
)
from bimodal_hydro.params import ContactThresholds, PIDGains

TH = ContactThresholds()


def frame(t, v, p, x=0.03, phi=0.0):
    return SensorFrame(t, x, v, p, x, 0.038, phi)


# --- contact detection ------------------------------------------------------------


def test_contact_fires_on_pressure_and_velocity_collapse():
    frames = [frame(i * 1e-3, 0.6, 0.5e6) for i in range(6)] + [frame(6e-3, 0.0, 0.5e6)]
    assert detect_contact(frames, TH)


def test_no_contact_without_sustained_pressure():
    frames = [frame(i * 1e-3, 0.6, 0.5e6) for i in range(6)]
    frames[-2] = frame(4e-3, 0.6, 0.1e6)
    frames.append(frame(6e-3, 0.0, 0.5e6))
    assert not detect_contact(frames, TH)


def test_no_contact_while_accelerating_under_pressure():
    frames = [frame(i * 1e-3, 0.1 * i, 0.5e6) for i in range(10)]
    assert not detect_contact(frames, TH)


def test_no_contact_with_short_window():
    assert not detect_contact([frame(0.0, 0.6, 1e6), frame(1e-3, 0.0, 1e6)], TH)


def test_detector_latches_and_resets():
    det = ContactDetector(TH)
    t = 0.0
    for _ in range(6):
        det.update(frame(t, 0.6, 0.5e6))
        t += 1e-3
    assert det.update(frame(t, 0.0, 0.5e6))
    assert det.fired_at == t
    assert det.update(frame(t + 1e-3, 0.0, 0.0))  # latched
    det.reset()
    assert not det.update(frame(t + 2e-3, 0.0, 0.0))


def test_detector_rejects_non_increasing_time():
    det = ContactDetector(TH)
    det.update(frame(1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        det.update(frame(1.0, 0.0, 0.0))


def test_no_false_positive_on_pure_swing(traces):
    tr = traces["swing-only"]
    assert tr.summary["contact_detected_s"] is None
    assert "contact_detected" not in {k for _, k in tr.events}


def test_contact_fires_within_10ms_of_impact(traces):
    s = traces["gait"].summary
    assert s["contact_time_s"] is not None and s["contact_detected_s"] is not None
    assert 0.0 <= s["contact_detected_s"] - s["contact_time_s"] <= 0.010


# --- PID ---------------------------------------------------------------------------


def test_pid_proportional_and_derivative_terms():
    u, st1 = pid_step(1.0, 0.0, PIDState(), PIDGains(2.0, 0.0, 0.0), 0.01)
    assert u == 2.0 and st1.prev_error == 1.0
    u, _ = pid_step(1.0, 0.5, st1, PIDGains(0.0, 0.0, 1.0), 0.01)
    assert u == pytest.approx((0.5 - 1.0) / 0.01)


def test_pid_integral_accumulates_when_unsaturated():
    state = PIDState()
    for _ in range(10):
        u, state = pid_step(1.0, 0.0, state, PIDGains(0.0, 1.0), 0.1)
    assert state.integral == pytest.approx(1.0)
    assert u == pytest.approx(1.0)


def test_anti_windup_recovers_immediately():
    gains, dt, limit = PIDGains(1.0, 5.0), 1e-3, 1.0
    state = PIDState()
    for _ in range(5000):  # long saturation
        u, state = pid_step(10.0, 0.0, state, gains, dt, limit)
        assert u == limit
    assert gains.ki * state.integral <= limit + 1e-9
    u, state = pid_step(0.0, 0.5, state, gains, dt, limit)
    assert u < limit  # leaves saturation on the first reversed-error sample

    naive = 0.0
    for _ in range(5000):
        naive += 10.0 * dt
    assert gains.ki * naive > 100 * limit  # what an unprotected integrator would hold


@given(
    errors=st.lists(st.floats(-100, 100), min_size=1, max_size=60),
    limit=st.floats(0.1, 10.0),
)
def test_integrator_frozen_while_pushing_into_saturation(errors, limit):
    gains, dt = PIDGains(0.5, 2.0, 0.0), 0.01
    state = PIDState()
    for e in errors:
        u, new = pid_step(e, 0.0, state, gains, dt, limit)
        assert -limit <= u <= limit
        unclamped = gains.kp * e + gains.ki * (state.integral + e * dt)
        if abs(unclamped) > limit and e * unclamped > 0:
            assert new.integral == state.integral
        state = new


# --- state machine --------------------------------------------------------------


def test_edge_set_is_exactly_the_allowed_graph():
    edges = {(a, b) for a, b in reachable_edges() if a is not b}
    assert edges == set(ALLOWED_EDGES)


def test_no_direct_hf_to_braking():
    mode, diag = next_mode(ControlMode.HF, Events(request=ModeRequest.BRAKE))
    assert mode is ControlMode.HF and "rejected" in diag


def test_downshift_ignores_requests_until_closed():
    mode, diag = next_mode(ControlMode.DOWNSHIFTING, Events(request=ModeRequest.HS))
    assert mode is ControlMode.DOWNSHIFTING and diag
    mode, _ = next_mode(ControlMode.DOWNSHIFTING, Events(valve_closed=True, request=ModeRequest.HS))
    assert mode is ControlMode.HF


def test_braking_releases_only_to_hs():
    assert next_mode(ControlMode.BRAKING, Events(request=ModeRequest.HS))[0] is ControlMode.HS
    assert next_mode(ControlMode.BRAKING, Events(request=ModeRequest.HF))[0] is ControlMode.BRAKING


def test_commands_per_mode():
    refs = ModeRefs(current=5.0, w2=3.0, hold_current=7.0, i1_track=1.5, w2_track=-2.0, braking_angle=0.7)
    assert command_for(ControlMode.HS, refs) == ControlCommand(5.0, -2.0, 0.0)
    assert command_for(ControlMode.DOWNSHIFTING, refs) == ControlCommand(7.0, 3.0, math.pi / 2)
    assert command_for(ControlMode.HF, refs) == ControlCommand(1.5, 3.0, math.pi / 2)
    assert command_for(ControlMode.UPSHIFTING, refs) == ControlCommand(1.5, 3.0, 0.0)
    assert command_for(ControlMode.BRAKING, refs) == ControlCommand(0.0, 0.0, 0.7)


def test_transition_on_contact_holds_current():
    tr = step_state_machine(ControlMode.HS, Events(contact=True), ModeRefs(current=10.0, hold_current=10.0))
    assert tr.mode is ControlMode.DOWNSHIFTING
    assert tr.command.i1 == 10.0 and tr.command.phi == math.pi / 2


def test_command_saturation():
    cmd = ControlCommand(50.0, -1e4, 3.0).saturated(11.9, 879.0)
    assert cmd == ControlCommand(11.9, -879.0, math.pi / 2)


def test_controller_downshifts_on_contact(params):
    ctl = Controller(params)
    refs = HighLevelRefs(ModeRequest.HF, 10.0, 0.0)
    t = 0.0
    for _ in range(8):
        cmd, _ = ctl.update(SensorFrame(t, 0.03, 0.6, 0.5e6, 0.03, 0.038, 0.0), refs)
        t += 1e-3
    assert ctl.mode is ControlMode.HS
    cmd, _ = ctl.update(SensorFrame(t, 0.03, 0.0, 0.5e6, 0.03, 0.038, 0.0), refs)
    assert ctl.mode is ControlMode.DOWNSHIFTING
    assert cmd.i1 == 10.0 and cmd.phi == math.pi / 2
    assert ctl.log.contact_times == [t]


def test_gait_script_phases():
    g = GaitScript()
    assert g(0.0).request is ModeRequest.HS and g(0.0).current == pytest.approx(10.22)
    assert g.phase(0.2) == "impact-wait" and g(0.2).request is ModeRequest.HF
    assert g(0.5).velocity > 0 and g(1.0).velocity < 0
    assert g(1.6).request is ModeRequest.HS
    with pytest.raises(ValueError):
        g(-1.0)


def test_other_scripts():
    assert SwingScript()(0.05).current < 0
    assert LiftScript()(0.0).velocity == 0.0
    assert make_script("brake")(0.3).request is ModeRequest.BRAKE
    with pytest.raises(ValueError):
        make_script("dance")
