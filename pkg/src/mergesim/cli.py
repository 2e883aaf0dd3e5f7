"""Command-line entry point: validate a scenario, run one, or sweep a grid.

Exit statuses: 0 success, 1 configuration error, 2 simulation abort,
3 partial sweep failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import csvio
from .engine import run as run_simulation
from .errors import CollisionDetected, MergeSimError, NonTermination
from .metrics import (
    CellMetrics,
    Group,
    aggregate,
    average_speed,
    congestion_label,
    fuel_per_mile,
)
from .scenario import ScenarioConfig, format_scenario, parse_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2
EXIT_PARTIAL = 3

DEFAULT_DEMANDS = (1400.0, 2400.0, 3400.0)
DEFAULT_PENETRATIONS = (0.0, 0.3, 0.7, 1.0)


def _default_out() -> str:
    return os.environ.get("MERGESIM_OUT", "out")


def _load_config(path: str) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(text)


def _summarize(config: ScenarioConfig, trips) -> list[CellMetrics]:
    cells = []
    for group in (Group.RAMP, Group.MAINLINE):
        speed = average_speed(trips, group)
        fuel = fuel_per_mile(trips, group)
        if speed is None or fuel is None:
            continue
        cells.append(
            CellMetrics(
                group=group,
                demand_vph=config.demand_vph,
                penetration=config.penetration_rate,
                seed=config.seed,
                avg_speed=speed,
                fuel_g_per_mile=fuel,
            )
        )
    return cells


def _run_cell(args) -> tuple[tuple, list[CellMetrics], str]:
    config, out_dir, record_games, trajectory_decimation = args
    key = (config.demand_vph, config.penetration_rate, config.seed)
    try:
        log = run_simulation(
            config,
            trajectory_decimation=trajectory_decimation,
            record_games=record_games,
        )
    except MergeSimError as exc:
        return key, [], str(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csvio.write_trips(out / "trips.csv", log.trips)
    cells = _summarize(config, log.trips)
    csvio.write_results(out / "results.csv", cells)
    if record_games:
        csvio.write_games(out / "games.csv", log.games)
    if trajectory_decimation > 0:
        csvio.write_trajectories(out / "trajectories.csv", log.trajectories)
    return key, cells, ""


def _parse_trajectories(value: str) -> int:
    if value == "none":
        return 0
    if value == "full":
        return 1
    try:
        decimation = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "--trajectories takes none, full, or a decimation integer"
        ) from None
    if decimation < 1:
        raise argparse.ArgumentTypeError("decimation must be >= 1")
    return decimation


def cmd_validate(args) -> int:
    try:
        config = _load_config(args.config)
    except (OSError, MergeSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_scenario(config), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
            config.validate()
    except (OSError, MergeSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        log = run_simulation(
            config,
            trajectory_decimation=args.trajectories,
            record_games=args.games,
        )
    except (CollisionDetected, NonTermination) as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    csvio.write_trips(out / "trips.csv", log.trips)
    cells = _summarize(config, log.trips)
    csvio.write_results(out / "results.csv", cells)
    if args.games:
        csvio.write_games(out / "games.csv", log.games)
    if args.trajectories > 0:
        csvio.write_trajectories(out / "trajectories.csv", log.trajectories)
    label = congestion_label(config.demand_vph)
    for cell in cells:
        print(
            f"{cell.group.value}: demand={config.demand_vph:g} vph ({label}), "
            f"penetration={config.penetration_rate:.0%}, "
            f"avg_speed={cell.avg_speed:.2f} m/s, "
            f"fuel={cell.fuel_g_per_mile:.1f} g/mile"
        )
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def cmd_sweep(args) -> int:
    try:
        base = (
            _load_config(args.config) if args.config else ScenarioConfig()
        )
        base.validate()
    except (OSError, MergeSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    demands = args.demands or list(DEFAULT_DEMANDS)
    penetrations = args.penetrations or list(DEFAULT_PENETRATIONS)
    seeds = args.seeds or [base.seed]
    if not demands or not penetrations or not seeds:
        print("error: empty sweep grid", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    jobs = []
    for demand in demands:
        for pen in penetrations:
            for seed in seeds:
                config = replace(
                    base, demand_vph=demand, penetration_rate=pen, seed=seed
                )
                config.validate()
                cell_dir = out / f"d{demand:g}_p{round(pen * 100):d}_s{seed}"
                jobs.append((config, str(cell_dir), args.games, 0))

    failures = []
    all_cells: list[CellMetrics] = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]
    for key, cells, error in outcomes:
        if error:
            failures.append((key, error))
            print(
                f"cell demand={key[0]:g} penetration={key[1]:g} seed={key[2]} "
                f"FAILED: {error}",
                file=sys.stderr,
            )
        else:
            all_cells.extend(cells)

    if all_cells:
        try:
            rows = aggregate(all_cells)
        except MergeSimError as exc:
            print(f"error: {exc}", file=sys.stderr)
            rows = []
        if len(seeds) > 1:
            mean_cells = _seed_means(all_cells)
            rows = rows + aggregate(mean_cells)
        csvio.write_table(out / "table.csv", rows)
    return EXIT_PARTIAL if failures else EXIT_OK


def _seed_means(cells: list[CellMetrics]) -> list[CellMetrics]:
    grouped: dict[tuple, list[CellMetrics]] = {}
    for cell in cells:
        grouped.setdefault(
            (cell.group, cell.demand_vph, cell.penetration), []
        ).append(cell)
    means = []
    for (group, demand, pen), members in sorted(
        grouped.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0].value)
    ):
        n = len(members)
        means.append(
            CellMetrics(
                group=group,
                demand_vph=demand,
                penetration=pen,
                seed=-1,
                avg_speed=sum(m.avg_speed for m in members) / n,
                fuel_g_per_mile=sum(m.fuel_g_per_mile for m in members) / n,
            )
        )
    return means


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergesim",
        description="Deterministic on-ramp merge simulator for mixed traffic",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="parse and echo a scenario file")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run one scenario and write CSV artifacts")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=_default_out())
    p_run.add_argument(
        "--trajectories", type=_parse_trajectories, default=0,
        help="none, full, or a decimation N (log every Nth step)",
    )
    p_run.add_argument(
        "--games", action=argparse.BooleanOptionalAction, default=True,
        help="write the per-game debug trace",
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a demand x penetration grid")
    p_sweep.add_argument("--config", default=None, help="base scenario file")
    p_sweep.add_argument("--demands", type=_float_list, default=None)
    p_sweep.add_argument("--penetrations", type=_float_list, default=None)
    p_sweep.add_argument("--seeds", type=_int_list, default=None)
    p_sweep.add_argument("--out", default=_default_out())
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument(
        "--games", action=argparse.BooleanOptionalAction, default=False,
        help="write per-game debug traces in each cell",
    )
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
