import csv

import pytest

from bimodal_hydro.cli import main, strict_violations


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_prints_ratios(capsys):
    code, out, _ = run(capsys, "check")
    assert code == 0
    assert "T1 = 314.16" in out and "T2 = 35185.8" in out


def test_check_low_ratio_warns_but_succeeds(capsys):
    code, out, _ = run(capsys, "check", "--override", "line2.reduction_ratio=1.0")
    assert code == 0 and "approximation" in out


def test_check_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('schema_version = "1.0"\nline1.max_current_a = [\n')
    code, _, err = run(capsys, "check", "--config", str(bad))
    assert code == 1 and "line" in err


def test_check_invalid_value(capsys):
    code, _, err = run(capsys, "check", "--override", "line1.screw_lead_m=-1")
    assert code == 1 and "line1.screw_lead" in err


def test_unknown_key_is_config_error(capsys):
    code, _, err = run(capsys, "check", "--override", "line1.bogus=1")
    assert code == 1 and "line1.bogus" in err


def test_override_round_trip(capsys):
    code, out, _ = run(capsys, "dump-config", "--override", "valve.max_angular_speed_radps=6.5")
    assert code == 0
    assert "valve.max_angular_speed_radps = 6.5" in out


def test_analyze_capability(tmp_path, capsys):
    code, _, _ = run(capsys, "analyze", "capability", "--out", str(tmp_path / "o"))
    assert code == 0
    with open(tmp_path / "o" / "capability_table.csv") as fh:
        rows = {r["mode"]: r for r in csv.DictReader(fh)}
    assert float(rows["HS"]["F_max_N"]) == pytest.approx(350, rel=5e-3)
    assert float(rows["HF"]["m_A_kg"]) == pytest.approx(8900, rel=5e-3)
    assert rows["HS"]["frame"] == "piston"


def test_analyze_valve_map_aluminium(tmp_path, capsys):
    code, _, _ = run(capsys, "analyze", "valve-map", "--material", "al7075", "--out", str(tmp_path),
                     "--resolution", "5")
    assert code == 0
    with open(tmp_path / "valve_mass_map.csv") as fh:
        rows = list(csv.DictReader(fh))
    anchor = [r for r in rows if float(r["d_m"]) == 9.52e-3 and float(r["dt_s"]) == 0.13]
    assert anchor and abs(float(anchor[0]["mass_total_kg"]) - 0.172) / 0.172 <= 0.1


def test_analyze_unknown_material(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", "valve-map", "--material", "unobtainium", "--out", str(tmp_path))
    assert code == 1 and "unobtainium" in err


def test_analyze_quadrant_is_idempotent(tmp_path, capsys):
    assert run(capsys, "analyze", "quadrant", "--out", str(tmp_path))[0] == 0
    first = (tmp_path / "quadrant_regions.csv").read_bytes()
    assert run(capsys, "analyze", "quadrant", "--out", str(tmp_path))[0] == 0
    assert (tmp_path / "quadrant_regions.csv").read_bytes() == first


def test_simulate_gait_strict(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "gait", "--out", str(tmp_path), "--strict")
    assert code == 0
    assert "downshift_duration_s = 0.128" in out
    assert (tmp_path / "gait_trace.csv").exists() and (tmp_path / "gait_summary.txt").exists()


def test_simulate_missed_contact(tmp_path, capsys):
    code, out, err = run(capsys, "simulate", "gait", "--out", str(tmp_path), "--strict",
                         "--override", "control.contact.pressure_threshold_pa=1e9")
    assert code == 3
    assert "missed_contact = True" in out
    assert "downshift_duration_s" not in out
    assert "not detected" in err


def test_simulate_drop(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "drop", "--out", str(tmp_path), "--strict")
    assert code == 0
    value = [ln for ln in out.splitlines() if ln.startswith("peak_braking_force_N")][0]
    assert float(value.split("=")[1]) >= 1500.0


def test_simulate_instability_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "swing-only", "--out", str(tmp_path),
                       "--override", "load.swing.output_loss_nspm=1e9")
    assert code == 2 and "unstable" in err


def test_simulate_unknown_scenario(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "moonwalk", "--out", str(tmp_path))
    assert code == 1 and "unknown scenario" in err


def test_simulate_bad_dt(tmp_path, capsys):
    assert run(capsys, "simulate", "swing-only", "--out", str(tmp_path), "--dt", "3e-4")[0] == 1
    assert run(capsys, "simulate", "swing-only", "--out", str(tmp_path), "--dt", "-1")[0] == 1


def test_simulate_is_idempotent(tmp_path, capsys):
    run(capsys, "simulate", "swing-only", "--out", str(tmp_path))
    first = (tmp_path / "swing-only_trace.csv").read_bytes()
    run(capsys, "simulate", "swing-only", "--out", str(tmp_path))
    assert (tmp_path / "swing-only_trace.csv").read_bytes() == first


def test_output_dir_created(tmp_path, capsys):
    target = tmp_path / "a" / "b"
    assert run(capsys, "analyze", "capability", "--out", str(target))[0] == 0
    assert (target / "capability_table.csv").exists()


def test_strict_violations_helper():
    assert strict_violations("drop", {"peak_braking_force_N": 1000.0, "peak_throttle_power_W": 100.0})
    assert not strict_violations("swing-only", {"energy_residual_relative": 1e-9})
