"""Longitudinal vehicle models.

Two families of control live here: the consensus acceleration law used by
connected automated vehicles (CAVs) to track an assigned target vehicle, and
the Krauss safe-speed car-following model used by legacy (human-driven)
vehicles.  Free-flow speed tracking and kinematic integration round out the
per-vehicle update toolkit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

from .errors import MissingTarget, NegativeGap

ACCEL_MIN_DEFAULT = -5.0
ACCEL_MAX_DEFAULT = 3.0


class VehicleClass(Enum):
    CAV = "cav"
    LEGACY = "legacy"


class Lane(Enum):
    RAMP = "ramp"
    MAINLINE_RIGHT = "mainline_right"
    MAINLINE_LEFT = "mainline_left"


class Role(Enum):
    LEADER = "leader"
    FOLLOWER = "follower"
    UNASSIGNED = ""


MAINLINE_LANES = (Lane.MAINLINE_RIGHT, Lane.MAINLINE_LEFT)


@dataclass(slots=True)
class VehicleState:
    """Kinematic and bookkeeping state of one vehicle.

    Positions are measured along the vehicle's own lane frame to the front
    bumper; a vehicle occupies [position - length, position].
    """

    id: int
    vehicle_class: VehicleClass
    lane: Lane
    position: float
    speed: float
    accel: float = 0.0
    length: float = 5.0
    driver_sigma: float = 0.0
    desired_speed: float = 20.0
    role: Role = Role.UNASSIGNED
    target_id: Optional[int] = None
    depart_time: float = 0.0
    distance_traveled: float = 0.0
    origin: Lane = Lane.MAINLINE_RIGHT
    fuel_g: float = 0.0
    arrival_time: Optional[float] = None

    @property
    def is_cav(self) -> bool:
        return self.vehicle_class is VehicleClass.CAV


class TargetSnapshot(NamedTuple):
    """Frozen view of a target vehicle, in the frame the caller works in.

    ``length`` is the effective occupied length the follower keeps clear;
    callers may pad it (e.g. by the standstill minimum gap) to shape the
    equilibrium spacing without touching the control law itself.
    """

    id: Optional[int]
    position: float
    speed: float
    length: float


@dataclass(frozen=True)
class ControllerParams:
    """Gains of the consensus acceleration law.

    adjacency: coupling on/off weight between the pair (usually 1).
    spacing_gain: 1/s^2 gain applied to the combined error bracket.
    speed_weight: seconds; weight of the speed error against the spacing error.
        With spacing_gain 0.3 a weight of 4 makes the closed loop overdamped,
        so a follower opening a 25 m slot dips about 6 m/s instead of
        cratering to a crawl (the dip scales with spacing error over this
        weight).
    comm_delay: seconds of communication delay; callers must hand in a target
        snapshot that is already this old.
    time_gap: desired inter-vehicle time gap in seconds.
    free_flow_gain: 1/s gain of the free-flow speed tracking law; 1.0 gives
        automated vehicles roughly the same launch profile as the legacy
        model's flat acceleration bound.
    """

    adjacency: float = 1.0
    spacing_gain: float = 0.3
    speed_weight: float = 5.0
    comm_delay: float = 0.0
    time_gap: float = 1.0
    free_flow_gain: float = 1.0


@dataclass(frozen=True)
class KraussParams:
    """Parameters of the Krauss safe-speed model."""

    reaction_time: float = 1.0
    max_decel: float = 5.0
    accel_max: float = ACCEL_MAX_DEFAULT
    timestep: float = 0.02


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def consensus_accel(
    ego,
    target,
    params: ControllerParams,
    accel_min: float = ACCEL_MIN_DEFAULT,
    accel_max: float = ACCEL_MAX_DEFAULT,
) -> float:
    """Reference acceleration driving ego onto its target's tail.

    ``ego`` and ``target`` need ``position`` and ``speed`` attributes in a
    shared longitudinal frame (``target`` also ``length``); the target is a
    snapshot already delayed by ``params.comm_delay``.  The command is

        a = -adjacency * spacing_gain * [ (r_e - r_t + l_t + v_e*(t_gap + tau))
                                          + speed_weight * (v_e - v_t) ]

    clamped to the acceleration bounds.  At the equilibrium the ego trails
    the target by its length plus ``v_e * time_gap`` at matched speed.
    """
    if target is None:
        raise MissingTarget("consensus control requires a live target snapshot")
    tau = params.comm_delay
    spacing_err = (
        ego.position
        - target.position
        + target.length
        + ego.speed * (params.time_gap + tau)
    )
    speed_err = ego.speed - target.speed
    raw = -params.adjacency * params.spacing_gain * (
        spacing_err + params.speed_weight * speed_err
    )
    return clamp(raw, accel_min, accel_max)


def krauss_safe_speed(
    gap: float, leader_speed: float, follower_speed: float, params: KraussParams
) -> float:
    """Safe speed behind a leader: the classic Krauss braking bound."""
    tr = params.reaction_time
    denom = (leader_speed + follower_speed) / (2.0 * params.max_decel) + tr
    return leader_speed + (gap - leader_speed * tr) / denom


def krauss_speed(
    follower,
    leader,
    params: KraussParams,
    noise,
    desired_speed: Optional[float] = None,
) -> float:
    """Next-step speed of a legacy vehicle under the Krauss model.

    ``leader`` may be None (free road).  ``noise`` is the follower's own
    deterministic random stream; the dawdling term scales with the driver's
    imperfection ``follower.driver_sigma``.  Raises NegativeGap when the
    bumper gap to the leader is already negative, which means an upstream
    collision rather than a car-following situation.
    """
    v_f = follower.speed
    v_des_cap = follower.desired_speed if desired_speed is None else desired_speed
    if leader is None:
        v_safe = math.inf
    else:
        gap = leader.position - follower.position - leader.length
        if gap < 0.0:
            raise NegativeGap(
                f"gap {gap:.3f} m behind leader at {leader.position:.2f} m"
            )
        v_safe = krauss_safe_speed(gap, leader.speed, v_f, params)
    v_next = min(v_safe, v_f + params.accel_max * params.timestep, v_des_cap)
    sigma = follower.driver_sigma
    if sigma > 0.0:
        v_next -= sigma * params.accel_max * params.timestep * noise.random()
    return max(0.0, v_next)


def free_flow_accel(
    speed: float,
    desired_speed: float,
    gain: float = 0.4,
    accel_min: float = ACCEL_MIN_DEFAULT,
    accel_max: float = ACCEL_MAX_DEFAULT,
) -> float:
    """Proportional speed tracking toward the desired speed, clamped."""
    return clamp(gain * (desired_speed - speed), accel_min, accel_max)


class Command(NamedTuple):
    """A longitudinal command: either an acceleration or a direct speed."""

    kind: str  # "accel" | "speed"
    value: float


def integrate(state: VehicleState, command: Command, dt: float) -> VehicleState:
    """Semi-implicit step: update speed first, then advance position with it.

    Acceleration commands produce v' = max(0, v + a*dt); speed commands (as
    returned by krauss_speed) are applied directly.  The state is updated in
    place and returned; ``accel`` records the realized (dv/dt) value so that
    clamping at the v >= 0 floor is reflected.
    """
    if command.kind == "accel":
        v_new = state.speed + command.value * dt
        if v_new < 0.0:
            v_new = 0.0
    else:
        v_new = command.value
        if v_new < 0.0:
            v_new = 0.0
    state.accel = (v_new - state.speed) / dt
    state.speed = v_new
    step_dist = v_new * dt
    state.position += step_dist
    state.distance_traveled += step_dist
    return state
