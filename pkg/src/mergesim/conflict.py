"""Conflict prediction at the merge area.

Ramp and mainline-right vehicles are projected into a shared frame anchored
at the merge point; a conflict exists when a ramp vehicle and a mainline
candidate are expected at the merge point within a small time window of each
other.  Each ramp vehicle holds at most one conflict pair, re-evaluated every
timestep, and a mainline vehicle can be claimed by only one ramp vehicle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .dynamics import Lane, VehicleClass, VehicleState
from .errors import WrongLane
from .game import SPEED_FLOOR, GameKind


@dataclass(frozen=True)
class MergeFrameProjection:
    """A vehicle's position relative to the merge point.

    ``distance_to_merge`` shrinks as the vehicle approaches and goes
    negative inside the merge zone; ``projected_position`` is its negation,
    so projected coordinates grow in the direction of travel and are shared
    by ramp and mainline-right vehicles.  ``eta`` floors the speed so a
    crawling vehicle still gets a finite (large) arrival estimate, and is
    clamped at zero once the merge point is behind the vehicle.
    """

    vehicle_id: int
    distance_to_merge: float
    projected_position: float
    eta: float


def project_to_merge_frame(state: VehicleState, geometry) -> MergeFrameProjection:
    if state.lane is Lane.MAINLINE_LEFT:
        raise WrongLane("left-lane vehicles never conflict at the merge point")
    d = geometry.merge_point(state.lane) - state.position
    eta = max(d, 0.0) / max(state.speed, SPEED_FLOOR)
    return MergeFrameProjection(
        vehicle_id=state.id,
        distance_to_merge=d,
        projected_position=-d,
        eta=eta,
    )


@dataclass(frozen=True)
class ConflictPair:
    """A predicted merge conflict between one ramp and one mainline vehicle."""

    ramp_vehicle_id: int
    mainline_vehicle_id: int
    game_kind: GameKind
    projected_gap: float
    d_end: float  # ramp vehicle's remaining distance to the merge-zone end


def projected_gap(
    a: MergeFrameProjection, a_length: float, b: MergeFrameProjection, b_length: float
) -> float:
    """Bumper gap between two projected vehicles; the one farther along leads."""
    if a.projected_position >= b.projected_position:
        return (a.projected_position - a_length) - b.projected_position
    return (b.projected_position - b_length) - a.projected_position


def pair_game_kind(
    ramp_class: VehicleClass, mainline_class: VehicleClass
) -> GameKind:
    """Game type by players: two CAVs cooperate, one plays alone, none skip."""
    cavs = (ramp_class is VehicleClass.CAV) + (mainline_class is VehicleClass.CAV)
    if cavs == 2:
        return GameKind.COOPERATIVE
    if cavs == 1:
        return GameKind.NONCOOPERATIVE
    return GameKind.NO_GAME


def predict_conflict(
    ramp_proj: MergeFrameProjection,
    ramp_state: VehicleState,
    candidates: Sequence[tuple[MergeFrameProjection, VehicleState]],
    geometry,
    horizon: float,
    window: float,
) -> Optional[ConflictPair]:
    """Pick the mainline candidate expected at the merge closest in time.

    Candidates must already be restricted to mainline-right vehicles within
    detection range (and no farther past the merge point than the zone
    itself).  Returns None when the nearest expected-arrival difference is
    not inside ``window`` or either arrival lies beyond ``horizon``.
    """
    best: Optional[tuple[float, MergeFrameProjection, VehicleState]] = None
    for proj, state in candidates:
        diff = abs(ramp_proj.eta - proj.eta)
        if best is None or diff < best[0]:
            best = (diff, proj, state)
    if best is None:
        return None
    diff, proj, state = best
    if diff >= window or ramp_proj.eta >= horizon or proj.eta >= horizon:
        return None
    d_end = max(0.0, ramp_proj.distance_to_merge + geometry.merge_zone_length)
    leader_len = (
        ramp_state.length
        if ramp_proj.projected_position >= proj.projected_position
        else state.length
    )
    gap = (
        abs(ramp_proj.projected_position - proj.projected_position) - leader_len
    )
    return ConflictPair(
        ramp_vehicle_id=ramp_proj.vehicle_id,
        mainline_vehicle_id=proj.vehicle_id,
        game_kind=pair_game_kind(ramp_state.vehicle_class, state.vehicle_class),
        projected_gap=gap,
        d_end=d_end,
    )
