"""Mobility and fuel metrics over finished trips.

Average group speed is the ratio of vehicle-miles traveled to vehicle-hours
traveled.  Fuel is a physics-based surrogate: tractive power from inertia,
aerodynamic drag and rolling resistance, mapped to a fuel rate with an idle
floor.  Absolute grams are model-dependent; the relative numbers between
scenarios are what the aggregation reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .dynamics import Lane
from .errors import IncompleteTrip, MissingBaseline, ZeroDistance

METERS_PER_MILE = 1609.344


class Group(Enum):
    RAMP = "ramp"
    MAINLINE = "mainline"


@dataclass(frozen=True)
class FuelParams:
    """Parameters of the resistance-power fuel surrogate."""

    mass: float = 1500.0
    drag_area: float = 0.736  # Cd x frontal area, m^2
    air_density: float = 1.225
    rolling_coeff: float = 0.015
    gravity: float = 9.81
    idle_rate: float = 0.4  # g/s with the engine idling
    energy_slope: float = 7.66e-5  # g per joule of tractive work


def fuel_rate(v: float, a: float, params: FuelParams) -> float:
    """Instantaneous fuel use in g/s; braking never goes below idle."""
    power = v * (
        params.mass * a
        + 0.5 * params.air_density * params.drag_area * v * v
        + params.mass * params.gravity * params.rolling_coeff
    )
    if power < 0.0:
        power = 0.0
    return params.idle_rate + params.energy_slope * power


def trip_fuel(
    speeds: Sequence[float],
    accels: Sequence[float],
    dt: float,
    params: FuelParams,
    distance: Optional[float] = None,
) -> tuple[float, float]:
    """Integrate a trajectory into (grams, grams per mile).

    ``distance`` defaults to the integral of speed over the trajectory.
    """
    grams = 0.0
    travelled = 0.0
    for v, a in zip(speeds, accels):
        grams += fuel_rate(v, a, params) * dt
        travelled += v * dt
    if distance is None:
        distance = travelled
    if distance <= 0.0:
        raise ZeroDistance("trip covered no distance; g/mile undefined")
    return grams, grams / (distance / METERS_PER_MILE)


def in_group(origin: Lane, group: Group) -> bool:
    if group is Group.RAMP:
        return origin is Lane.RAMP
    return origin is not Lane.RAMP


def average_speed(trips: Iterable, group: Group) -> Optional[float]:
    """VMT/VHT over the group's finished trips; None for an empty group."""
    total_dist = 0.0
    total_time = 0.0
    n = 0
    for trip in trips:
        if not in_group(trip.origin, group):
            continue
        if trip.arrival_s is None:
            raise IncompleteTrip(f"vehicle {trip.id} has no arrival time")
        total_dist += trip.distance_m
        total_time += trip.arrival_s - trip.depart_s
        n += 1
    if n == 0 or total_time <= 0.0:
        return None
    return total_dist / total_time


def fuel_per_mile(trips: Iterable, group: Group) -> Optional[float]:
    """Group fuel intensity: total grams over total miles."""
    grams = 0.0
    miles = 0.0
    n = 0
    for trip in trips:
        if not in_group(trip.origin, group):
            continue
        grams += trip.fuel_g
        miles += trip.distance_m / METERS_PER_MILE
        n += 1
    if n == 0 or miles <= 0.0:
        return None
    return grams / miles


@dataclass(frozen=True)
class CellMetrics:
    """Per-(run, group) summary entering the result table."""

    group: Group
    demand_vph: float
    penetration: float
    seed: int
    avg_speed: float
    fuel_g_per_mile: float


@dataclass(frozen=True)
class ResultRow:
    group: Group
    demand_vph: float
    penetration: float
    seed: int
    avg_speed: float
    improvement_pct: float
    fuel_g_per_mile: float
    reduction_pct: float


CONGESTION_LABELS = {1400.0: "light", 2400.0: "moderate", 3400.0: "congested"}


def congestion_label(demand_vph: float) -> str:
    return CONGESTION_LABELS.get(float(demand_vph), f"{demand_vph:g}vph")


def aggregate(cells: Iterable[CellMetrics]) -> list[ResultRow]:
    """Attach improvement/reduction percentages against the 0% baseline.

    The baseline for a cell is the penetration-0 cell with the same group,
    demand and seed; rows come back sorted by (demand, penetration, seed,
    group) so repeated aggregation is byte-stable.
    """
    cells = list(cells)
    baselines: dict[tuple[Group, float, int], CellMetrics] = {}
    for cell in cells:
        if cell.penetration == 0.0:
            baselines[(cell.group, cell.demand_vph, cell.seed)] = cell
    rows = []
    for cell in cells:
        base = baselines.get((cell.group, cell.demand_vph, cell.seed))
        if base is None:
            raise MissingBaseline(
                f"no 0% penetration baseline for group={cell.group.value} "
                f"demand={cell.demand_vph:g} seed={cell.seed}"
            )
        improvement = 100.0 * (cell.avg_speed - base.avg_speed) / base.avg_speed
        reduction = (
            100.0
            * (base.fuel_g_per_mile - cell.fuel_g_per_mile)
            / base.fuel_g_per_mile
        )
        rows.append(
            ResultRow(
                group=cell.group,
                demand_vph=cell.demand_vph,
                penetration=cell.penetration,
                seed=cell.seed,
                avg_speed=cell.avg_speed,
                improvement_pct=improvement,
                fuel_g_per_mile=cell.fuel_g_per_mile,
                reduction_pct=reduction,
            )
        )
    rows.sort(
        key=lambda r: (r.demand_vph, r.penetration, r.seed, r.group.value)
    )
    return rows
