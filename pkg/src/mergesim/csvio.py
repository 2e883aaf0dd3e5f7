"""CSV artifact writers.

All files use a fixed column order, UNIX newlines, and floats rendered with
nine significant digits, so identical inputs produce byte-identical files on
any platform.
"""

from __future__ import annotations

import io
from typing import Iterable, Optional

from .engine import GameTraceRecord, TrajectoryPoint, TripRecord
from .metrics import ResultRow

TRIPS_HEADER = "id,class,origin,depart_s,arrival_s,distance_m,fuel_g"
TRAJECTORIES_HEADER = "id,t_s,lane,pos_m,speed_mps,accel_mps2,role,target_id"
GAMES_HEADER = (
    "t_s,ego_id,comp_id,kind,ego_role,ego_cost_lead,ego_cost_follow,"
    "comp_cost_lead,comp_cost_follow,risk1,risk_d2e,mobility"
)
RESULTS_HEADER = "group,demand_vph,penetration,avg_speed_mps,fuel_g_per_mile,seed"
TABLE_HEADER = (
    "group,demand_vph,penetration,avg_speed_mps,improvement_pct,"
    "fuel_g_per_mile,reduction_pct,seed"
)


def fnum(x: Optional[float]) -> str:
    if x is None:
        return ""
    return f"{x:.9g}"


def _write(path, header: str, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")


def write_trips(path, trips: Iterable[TripRecord]) -> None:
    _write(
        path,
        TRIPS_HEADER,
        (
            f"{t.id},{t.vehicle_class.value},{t.origin.value},"
            f"{fnum(t.depart_s)},{fnum(t.arrival_s)},"
            f"{fnum(t.distance_m)},{fnum(t.fuel_g)}"
            for t in trips
        ),
    )


def write_trajectories(path, points: Iterable[TrajectoryPoint]) -> None:
    _write(
        path,
        TRAJECTORIES_HEADER,
        (
            f"{p.id},{fnum(p.t_s)},{p.lane.value},{fnum(p.pos_m)},"
            f"{fnum(p.speed_mps)},{fnum(p.accel_mps2)},{p.role.value},"
            f"{'' if p.target_id is None else p.target_id}"
            for p in points
        ),
    )


def write_games(path, records: Iterable[GameTraceRecord]) -> None:
    _write(
        path,
        GAMES_HEADER,
        (
            f"{fnum(r.t_s)},{r.ego_id},{r.comp_id},{r.kind.value},"
            f"{r.ego_role.value},{fnum(r.ego_cost_lead)},{fnum(r.ego_cost_follow)},"
            f"{fnum(r.comp_cost_lead)},{fnum(r.comp_cost_follow)},"
            f"{fnum(r.risk1)},{fnum(r.risk_d2e)},{fnum(r.mobility)}"
            for r in records
        ),
    )


def _seed_token(seed: int) -> str:
    return "mean" if seed < 0 else str(seed)


def write_results(path, rows) -> None:
    """Per-run group summaries: (group, demand, penetration, speed, fuel, seed)."""
    _write(
        path,
        RESULTS_HEADER,
        (
            f"{r.group.value},{fnum(r.demand_vph)},{fnum(r.penetration)},"
            f"{fnum(r.avg_speed)},{fnum(r.fuel_g_per_mile)},{_seed_token(r.seed)}"
            for r in rows
        ),
    )


def write_table(path, rows: Iterable[ResultRow]) -> None:
    _write(
        path,
        TABLE_HEADER,
        (
            f"{r.group.value},{fnum(r.demand_vph)},{fnum(r.penetration)},"
            f"{fnum(r.avg_speed)},{fnum(r.improvement_pct)},"
            f"{fnum(r.fuel_g_per_mile)},{fnum(r.reduction_pct)},{_seed_token(r.seed)}"
            for r in rows
        ),
    )
