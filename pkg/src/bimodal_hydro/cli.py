"""Command-line entry point: ``bimodal-hydro {simulate,analyze,check,dump-config}``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import analysis
from .config import dump_flat, load_config_with_warnings, to_flat
from .params import ActuatorParams, ConfigError, derived_constants
from .scenarios import BUILTIN, load_scenario
from .simulator import SimulationInstability, run_scenario
from .valve import write_mass_map_csv

EXIT_OK, EXIT_CONFIG, EXIT_INSTABILITY, EXIT_STRICT = 0, 1, 2, 3

# Override keys with these prefixes address the scenario file, not the actuator config.
_SCENARIO_PREFIXES = ("scenario.", "initial.", "contact.", "script.", "load.initial")

# Acceptance bounds checked by ``simulate --strict``.
SHIFT_DURATION = (0.130, 0.005)
MIN_HOLD_FORCE = 280.0
MIN_BRAKING_FORCE = 1500.0
MIN_THROTTLE_POWER = 280.0
MAX_ENERGY_RESIDUAL = 0.005


def _split_overrides(items: Sequence[str]) -> tuple[list[str], list[str]]:
    cfg, scn = [], []
    for item in items:
        key = item.split("=", 1)[0].strip()
        (scn if key.startswith(_SCENARIO_PREFIXES) else cfg).append(item)
    return cfg, scn


def _load_params(args: argparse.Namespace, overrides: list[str]) -> ActuatorParams:
    params, warns = load_config_with_warnings(args.config, overrides)
    for w in warns:
        print(f"warning: {w}", file=sys.stderr)
    return params


def strict_violations(name: str, summary: dict[str, Any]) -> list[str]:
    """Acceptance checks on a run summary; an empty list means the run passes."""
    out = []
    if summary.get("energy_residual_relative", 0.0) > MAX_ENERGY_RESIDUAL:
        out.append(f"energy residual {summary['energy_residual_relative']:.3%} > 0.5%")
    if name == "gait":
        centre, tol = SHIFT_DURATION
        for key in ("downshift_duration_s", "upshift_duration_s"):
            val = summary.get(key)
            if val is None or abs(val - centre) > tol:
                out.append(f"{key} = {val} outside {centre} +/- {tol} s")
        low = summary.get("min_force_during_downshift_N")
        if low is None or low < MIN_HOLD_FORCE:
            out.append(f"output force fell to {low} N during the downshift")
        if summary.get("missed_contact"):
            out.append("contact was not detected")
    elif name == "drop":
        if summary["peak_braking_force_N"] < MIN_BRAKING_FORCE:
            out.append(f"peak braking force {summary['peak_braking_force_N']:.1f} N < 1500 N")
        if summary["peak_throttle_power_W"] <= MIN_THROTTLE_POWER:
            out.append(f"peak throttle power {summary['peak_throttle_power_W']:.1f} W <= 280 W")
    return out


def _format_summary(summary: dict[str, Any]) -> str:
    lines = []
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, list):
            value = "; ".join(value) if value else "none"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg_over, scn_over = _split_overrides(args.override)
    params = _load_params(args, cfg_over)
    scenario = load_scenario(args.scenario, scn_over)
    if args.dt is not None:
        scenario = scenario.with_dt(args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = run_scenario(scenario, params)
    except SimulationInstability as exc:
        print(f"error: simulation unstable: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    stem = Path(str(args.scenario)).stem
    trace.write_csv(out / f"{stem}_trace.csv")
    text = _format_summary(trace.summary)
    (out / f"{stem}_summary.txt").write_text(text)
    print(text, end="")
    if args.strict:
        problems = strict_violations(stem, trace.summary)
        for p in problems:
            print(f"strict: {p}", file=sys.stderr)
        if problems:
            return EXIT_STRICT
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    params = _load_params(args, args.override)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.which == "capability":
        rows = analysis.capability_table(params)
        analysis.write_capability_csv(rows, out / "capability_table.csv")
        for r in rows:
            print(
                f"{r.mode}: m_A = {r.reflected_mass:.4g} kg, F_max = {r.max_force:.4g} N, "
                f"v_max = {r.max_velocity:.4g} m/s, a_swing = {r.accel_swing:.4g}, "
                f"a_stance = {r.accel_stance:.4g} m/s^2 (piston frame)"
            )
        hs, hf = analysis.payload_capacity(params)
        print(f"payload: HS {hs:.2f} kg, HF {hf:.2f} kg")
    elif args.which == "quadrant":
        regions = analysis.quadrant_map(params)
        analysis.write_quadrant_csv(regions, out / "quadrant_regions.csv")
        print(f"wrote {len(regions)} regions")
    else:
        material = args.material
        try:
            params.material(material)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            grid = analysis.valve_mass_map(params, material, resolution=args.resolution)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        write_mass_map_csv(grid, out / "valve_mass_map.csv")
        anchor = grid[-1][0]
        print(
            f"{material}: d = {anchor.d * 1e3:.2f} mm, cycle {anchor.cycle_time:.3f} s -> "
            f"{anchor.mass_total * 1e3:.1f} g (body {anchor.body_fraction:.0%})"
        )
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    params, warns = load_config_with_warnings(args.config, args.override)
    dc = derived_constants(params)
    print(f"T1 = {dc.t1:.2f} 1/m")
    print(f"T2 = {dc.t2:.1f} 1/m")
    for name, mode in (("HS", dc.hs), ("HF", dc.hf)):
        print(
            f"{name}: m_A = {mode.reflected_mass:.6g} kg, F_max = {mode.max_force:.6g} N, "
            f"v_max = {mode.max_velocity:.6g} m/s"
        )
    for w in warns:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_dump_config(args: argparse.Namespace) -> int:
    params, _ = load_config_with_warnings(args.config, args.override)
    print(dump_flat(to_flat(params)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML config file")
    common.add_argument(
        "--override", action="append", default=[], metavar="K=V",
        help="override a dotted config key (repeatable)",
    )
    common.add_argument("--out", default="out", help="output directory (created if absent)")

    parser = argparse.ArgumentParser(prog="bimodal-hydro", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run a scenario")
    sim.add_argument("scenario", help=f"built-in ({', '.join(BUILTIN)}) or a scenario file")
    sim.add_argument("--strict", action="store_true", help="exit 3 if acceptance checks fail")
    sim.add_argument("--dt", type=float, default=None, help="integration step in seconds")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", parents=[common], help="write a static analysis CSV")
    ana.add_argument("which", choices=("capability", "quadrant", "valve-map"))
    ana.add_argument("--material", default="brass")
    ana.add_argument("--resolution", type=int, default=25)
    ana.set_defaults(func=cmd_analyze)

    chk = sub.add_parser("check", parents=[common], help="validate config, print derived constants")
    chk.set_defaults(func=cmd_check)

    dmp = sub.add_parser("dump-config", parents=[common], help="print the effective config")
    dmp.set_defaults(func=cmd_dump_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "dt", None) is not None and args.dt <= 0:
        print("error: --dt must be > 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in str(exc).splitlines() or ["invalid configuration"]:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
