"""Command-line runner for the scenario simulator.

    riskplan run --scenario scenarios/s1.json --occlusion on --out out/s1
    riskplan run --scenario scenarios/s3.json --compare --out out/s3

Exit codes: 0 run completed, 2 a run ended in a collision, 3 unexpected
hard failure.  `--compare` runs occlusion on and off sequentially and
prints a side-by-side summary.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, build_runner, parameter_table, parse_config
from .sim import RunResult, write_solves_csv, write_steps_csv

EXIT_OK = 0
EXIT_COLLISION = 2
EXIT_FAILURE = 3


def _parse_set(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _write_outputs(result: RunResult, out_dir: Path, cfg_json: str, header: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_steps_csv(result, out_dir / "steps.csv")
    write_solves_csv(result, out_dir / "solves.csv")
    summary = "\n".join(
        [
            f"scenario: {result.scenario_name}",
            f"occlusion tracking: {'on' if result.occlusion_enabled else 'off'}",
            "",
            "parameters:",
            header,
            "",
            result.summary.to_text(),
            "",
        ]
    )
    (out_dir / "summary.txt").write_text(summary)
    (out_dir / "config.json").write_text(cfg_json)


def _run_single(cfg, occlusion: bool, out_dir: Path, dump_grids: bool) -> RunResult:
    grid_dir = None
    if dump_grids:
        grid_dir = out_dir / "grids"
        grid_dir.mkdir(parents=True, exist_ok=True)
    runner = build_runner(cfg, occlusion_enabled=occlusion, dump_grid_dir=grid_dir)
    result = runner.run()
    _write_outputs(result, out_dir, cfg.to_json(), parameter_table(cfg))
    return result


def cmd_run(args) -> int:
    try:
        cfg = parse_config(args.scenario)
        cfg = apply_overrides(cfg, _parse_set(args.set))
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.out)
    print(f"scenario: {cfg.name}")
    print(parameter_table(cfg))
    try:
        if args.compare:
            results = []
            for occlusion in (True, False):
                sub = out / ("occlusion_on" if occlusion else "occlusion_off")
                print(f"\n--- occlusion {'on' if occlusion else 'off'} -> {sub}")
                result = _run_single(cfg, occlusion, sub, args.dump_grids)
                print(result.summary.to_text())
                results.append(result)
            on, off = results
            print("\ncomparison (occlusion on | off):")
            print(f"  collision:      {on.summary.collision!s:5} | {off.summary.collision!s}")
            print(
                f"  min clearance:  {on.summary.min_clearance:5.2f} | {off.summary.min_clearance:.2f}"
            )
            for aid in sorted(on.summary.first_detection):
                v_on = on.summary.speed_before_detection.get(aid)
                v_off = off.summary.speed_before_detection.get(aid)
                if v_on is not None and v_off is not None:
                    print(f"  v before detecting {aid}: {v_on:.2f} | {v_off:.2f}")
            collided = any(r.summary.collision for r in results)
            return EXIT_COLLISION if collided else EXIT_OK
        occlusion = args.occlusion == "on"
        result = _run_single(cfg, occlusion, out, args.dump_grids)
        print(result.summary.to_text())
        return EXIT_COLLISION if result.summary.collision else EXIT_OK
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"hard failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="riskplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario simulation")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--occlusion", choices=["on", "off"], default="on", help="hidden-object tracking in the planner cost")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--compare", action="store_true", help="run occlusion on and off, report side by side")
    run.add_argument("--dump-grids", action="store_true", help="write per-step hidden-set PGM rasters")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a simulation parameter (JSON value)")
    run.set_defaults(func=cmd_run)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
