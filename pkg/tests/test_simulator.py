import dataclasses
import math

import pytest

from bimodal_hydro.config import load_config
from bimodal_hydro.dynamics import CLOSED, OPEN, ContinuousState
from bimodal_hydro.params import ConfigError
from bimodal_hydro.scenarios import BUILTIN, load_scenario, parse_scenario_text
from bimodal_hydro.simulator import (
    TRACE_COLUMNS,
    Simulation,
    SimulationInstability,
    energy_audit,
    impact_coupling,
    read_trace_csv,
    run_scenario,
    step,
)

COAST = """
schema_version = "1.0"
scenario.name = "coast"
scenario.duration_s = 0.04
scenario.initial_mode = "BRAKING"
initial.x_o_m = 0.05
initial.x1_m = 0.05
initial.x2_m = 0.038
initial.v_o_mps = -0.6
initial.v1_mps = -0.6
initial.valve_angle_deg = 45
load.initial = "drop"
script.kind = "brake"
"""

IDLE = """
schema_version = "1.0"
scenario.name = "idle"
scenario.duration_s = 0.05
initial.x_o_m = 0.02
initial.x1_m = 0.038
initial.x2_m = 0.038
load.initial = "swing"
script.kind = "swing"
script.current = 0.0
"""


# --- impact coupling ---------------------------------------------------------------


def test_impact_coupling_open_keeps_m2_velocity():
    before = ContinuousState(0.03, 0.03, 0.038, 0.67, 0.66, 0.0)
    after = impact_coupling(-2.2147, before, 4.70948, OPEN)
    assert after.v_o == pytest.approx(-2.2147 / 4.70948)
    assert after.v_o - after.v1 == pytest.approx(before.v_o - before.v1)
    assert after.x_o == before.x_o


def test_impact_coupling_closed_keeps_m1():
    before = ContinuousState(v_o=0.01, v1=0.3)
    after = impact_coupling(0.0, before, 4.7, CLOSED)
    assert after.v_o == 0.0 and after.v1 == 0.3


def test_drop_piston_speed():
    after = impact_coupling(-math.sqrt(2 * 9.81 * 0.25), ContinuousState(), 46.2 / 9.81)
    assert after.v_o == pytest.approx(-0.470269, rel=1e-5)
    with pytest.raises(ValueError):
        impact_coupling(1.0, ContinuousState(), 0.0)


# --- shipped scenarios ---------------------------------------------------------------


@pytest.mark.parametrize("name", BUILTIN)
def test_energy_ledger_closes(traces, name):
    ledger = energy_audit(traces[name])
    assert ledger.relative_residual <= 0.005
    assert ledger.gross > 0


@pytest.mark.parametrize("name", BUILTIN)
def test_open_segments_satisfy_flow_constraint(traces, name):
    c = traces[name].columns
    dt = traces[name].sample_interval
    worst = 0.0
    for i in range(1, len(c["t_s"])):
        if c["regime"][i] == OPEN and c["regime"][i - 1] == OPEN:
            resid = (
                (c["x_o_m"][i] - c["x_o_m"][i - 1])
                - (c["x1_m"][i] - c["x1_m"][i - 1])
                - (c["x2_m"][i] - c["x2_m"][i - 1])
            ) / dt
            worst = max(worst, abs(resid))
            assert abs(c["v_o_mps"][i] - c["v1_mps"][i] - c["v2_mps"][i]) < 1e-12
    assert worst < 1e-6


def test_gait_sequence(traces):
    tr = traces["gait"]
    modes = [k for _, k in tr.events if k.startswith("mode_")]
    assert modes == ["mode_DOWNSHIFTING", "mode_HF", "mode_UPSHIFTING", "mode_HS"]
    s = tr.summary
    assert s["downshift_duration_s"] == pytest.approx(0.130, abs=0.005)
    assert s["upshift_duration_s"] == pytest.approx(0.130, abs=0.005)
    assert s["min_force_during_downshift_N"] >= 280.0
    assert not s["missed_contact"]
    assert s["diagnostics"] == []


def test_gait_lifts_payload_in_hf(traces):
    c = traces["gait"].columns
    hf = [x for x, m in zip(c["x_o_m"], c["mode"]) if m == "HF"]
    assert max(hf) - min(hf) == pytest.approx(0.02 * 0.5, rel=0.15)


def test_drop_braking(traces):
    s = traces["drop"].summary
    assert s["peak_braking_force_N"] >= 1500.0
    assert s["peak_throttle_power_W"] > 280.0
    assert s["contact_time_s"] == pytest.approx(math.sqrt(2 * 0.25 / 9.81), abs=1e-4)


def test_lift_only_tracks_velocity(traces):
    c = traces["lift-only"].columns
    t, v = c["t_s"], c["v_o_mps"]
    mid = [vv for tt, vv in zip(t, v) if 0.3 <= tt <= 0.55]
    assert sum(mid) / len(mid) == pytest.approx(0.02, rel=0.05)


def test_determinism(params):
    sc = load_scenario("gait")
    a = run_scenario(sc, params)
    b = run_scenario(sc, params)
    assert a.columns == b.columns
    assert a.events == b.events


def test_fourth_order_self_convergence(params):
    sc = parse_scenario_text(COAST)
    finals = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        sim = Simulation(sc, params, dt)
        sim.run()
        finals.append(sim.y[0])
    ratio = (finals[0] - finals[1]) / (finals[1] - finals[2])
    assert ratio == pytest.approx(16.0, rel=0.1)


def test_zero_input_ledger_is_zero(params):
    tr = run_scenario(parse_scenario_text(IDLE), params)
    ledger = energy_audit(tr)
    for value in (ledger.motor1_work, ledger.motor2_work, ledger.external_work,
                  ledger.viscous, ledger.throttle, ledger.stops, ledger.events):
        assert value == 0.0
    assert max(abs(v) for v in tr.columns["v_o_mps"]) < 1e-12


def test_dt_must_divide_control_period(params):
    with pytest.raises(ConfigError, match="divide"):
        Simulation(load_scenario("swing-only"), params, 3e-4)


def test_compliance_flag_not_implemented(params):
    soft = dataclasses.replace(params, fluid=dataclasses.replace(params.fluid, compliance_enabled=True))
    with pytest.raises(NotImplementedError):
        Simulation(load_scenario("swing-only"), soft)


def test_instability_is_raised(params):
    # A viscous loss far beyond what the fixed step can resolve.
    stiff = load_config(overrides=["load.swing.output_loss_nspm=1e9"])
    sim = Simulation(load_scenario("swing-only"), stiff)
    with pytest.raises(SimulationInstability, match="t ="):
        sim.run()


def test_step_function_advances_one_substep(params):
    sim = Simulation(load_scenario("swing-only"), params)
    step(sim)
    step(sim)
    assert sim.n == 2 and sim.t == pytest.approx(2e-4)
    with pytest.raises(ValueError):
        step(sim, 1e-3)


def test_regime_swaps_booked_as_events(traces):
    tr = traces["gait"]
    kinds = [k for _, k in tr.events]
    assert kinds.count("regime_closed") == 1 and kinds.count("regime_open") == 1
    closed_at = tr.event_times("regime_closed")[0]
    full_at = tr.event_times("valve_fully_closed")[0]
    assert 0 < full_at - closed_at <= 1e-3  # swap within one control tick of the tolerance


def test_trace_csv_round_trip(traces, tmp_path):
    tr = traces["swing-only"]
    path = tmp_path / "t.csv"
    tr.write_csv(path)
    back = read_trace_csv(path)
    assert tuple(back) == TRACE_COLUMNS
    for name in TRACE_COLUMNS:
        assert back[name] == tr.columns[name]


def test_unknown_load_rejected(params):
    sc = dataclasses.replace(load_scenario("swing-only"), load="ghost")
    with pytest.raises(ConfigError, match="ghost"):
        Simulation(sc, params)
