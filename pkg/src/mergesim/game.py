"""Merging game: action costs and role resolution.

Each conflicting (ramp, mainline) pair plays a two-action game: every player
can go first (leader) or yield (follower).  An action's cost blends a safety
risk built from predicted time-to-collision and time headway, a merge-urgency
risk for the ramp player, and a mobility term that charges for slowing down.
A CAV against a legacy vehicle minimizes its own cost; two CAVs minimize the
pair's summed cost.  Simultaneous leader/leader or follower/follower choices
are priced at a large sentinel and can never win.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

from .dynamics import (
    ACCEL_MAX_DEFAULT,
    ACCEL_MIN_DEFAULT,
    ControllerParams,
    Role,
    TargetSnapshot,
    consensus_accel,
    free_flow_accel,
)

SPEED_FLOOR = 0.1  # m/s; avoids division blow-ups for (near-)stopped vehicles


class GameKind(Enum):
    NONCOOPERATIVE = "noncooperative"
    COOPERATIVE = "cooperative"
    NO_GAME = "none"


class Side(Enum):
    MAINLINE = "mainline"
    RAMP = "ramp"


@dataclass(frozen=True)
class GameParams:
    """Tunables of the cost evaluation and solving."""

    safe_time_headway: float = 3.0  # three-second rule
    prediction_dt: float = 0.5  # lookahead used for the cost terms
    infinity_cost: float = 1e6  # sentinel for forbidden simultaneous roles
    commitment: float = 0.5  # seconds a resolved outcome is held;
    # damps role and partner oscillation between timesteps
    eq3_literal_sign: bool = False  # keep the literal minus on the
    # competitor's predicted speed change in the TTC denominator


class PlayerKinematics(NamedTuple):
    """One player's state projected into the shared merge frame."""

    position: float  # front bumper, increases toward travel
    speed: float
    accel: float  # observed (legacy) or last commanded (CAV)
    length: float


@dataclass(frozen=True)
class ActionEvaluation:
    """Every intermediate quantity behind one (player, action) cost."""

    role: Role
    candidate_accel: float
    predicted_gap: float
    predicted_ttc: Optional[float]
    predicted_headway: float
    risk1: float
    risk_d2e: Optional[float]
    mobility: float
    total_cost: float


def _predicted_travel(speed: float, accel: float, dt: float) -> float:
    return max(0.0, speed * dt + 0.5 * accel * dt * dt)


def predicted_ttc(
    gap: float,
    v_f: float,
    v_p: float,
    a_f: float,
    a_p: float,
    dt: float,
    literal_sign: bool = False,
) -> Optional[float]:
    """Predicted time-to-collision of a follower on a preceding vehicle.

    The gap is advanced by the pair's relative motion over ``dt`` and the
    speeds by their accelerations (floored at standstill).  Defined only
    while the follower is predicted faster; floored at zero for a predicted
    overlap.  With ``literal_sign`` the preceding vehicle's speed change is
    subtracted instead of added, mirroring a sign quirk some formulations
    carry; the default treats both predictions symmetrically.
    """
    gap_pred = gap + (v_p - v_f) * dt + 0.5 * (a_p - a_f) * dt * dt
    v_f_pred = max(0.0, v_f + a_f * dt)
    if literal_sign:
        v_p_pred = v_p - a_p * dt
    else:
        v_p_pred = max(0.0, v_p + a_p * dt)
    closing = v_f_pred - v_p_pred
    if closing <= 0.0:
        return None
    return max(0.0, gap_pred / closing)


def _safety_terms(
    gap: float,
    v_e: float,
    v_c: float,
    a_e: float,
    a_c: float,
    dt: float,
    t_h: float,
    literal_sign: bool = False,
) -> tuple[float, Optional[float], float, float]:
    """risk1 with its pieces: (risk1, ttc, headway, predicted gap).

    The ``e`` slot is the vehicle measured as the (predicted) rear one of
    the pair; callers orient the pair before calling.  The headway is the
    predicted gap over the e-side predicted speed.
    """
    gap_pred = gap + (v_c - v_e) * dt + 0.5 * (a_c - a_e) * dt * dt
    gap_floor = max(0.0, gap_pred)
    v_e_pred = max(0.0, v_e + a_e * dt)
    v_c_pred = max(0.0, v_c + a_c * dt)
    headway = gap_floor / max(v_e_pred, SPEED_FLOOR)
    if v_e_pred > v_c_pred:
        ttc = predicted_ttc(gap, v_e, v_c, a_e, a_c, dt, literal_sign)
        ttc_term = 0.0 if ttc is None else 1.0 - math.tanh(ttc / t_h)
        risk = (ttc_term + 1.0 - math.tanh(headway / t_h)) / 2.0
        return risk, ttc, headway, gap_pred
    risk = (1.0 - math.tanh(headway / t_h)) / 2.0
    return risk, None, headway, gap_pred


def safety_risk(
    gap: float,
    v_e: float,
    v_c: float,
    a_e: float,
    a_c: float,
    dt: float,
    t_h: float,
    literal_sign: bool = False,
) -> float:
    """Blended TTC/headway risk in [0, 1]; see `_safety_terms` for slots."""
    return _safety_terms(gap, v_e, v_c, a_e, a_c, dt, t_h, literal_sign)[0]


def distance_risk(d_end: float, v_ramp: float, t_h: float) -> float:
    """Merge-urgency risk: grows toward 0.5 as the zone end approaches."""
    h_ending = d_end / max(v_ramp, SPEED_FLOOR)
    return (1.0 - math.tanh(h_ending / t_h)) / 2.0


def mobility_cost(delta_v: float, v_e: float) -> float:
    """Cost of the action's speed change; decelerating costs more."""
    return (1.0 - math.tanh(delta_v / max(v_e, SPEED_FLOOR))) / 2.0


def candidate_accel(
    ego,
    competitor: TargetSnapshot,
    role: Role,
    controller: ControllerParams,
    leader_target: Optional[TargetSnapshot] = None,
    accel_min: float = ACCEL_MIN_DEFAULT,
    accel_max: float = ACCEL_MAX_DEFAULT,
) -> float:
    """Suggested acceleration for playing ``role`` against ``competitor``.

    A follower tracks the competitor with the consensus law.  A leader
    tracks the competitor's own predecessor (``leader_target``) when the
    caller found one in detection range, else it free-flows toward its
    desired speed.  A leader never tracks a target that is not ahead of it:
    braking toward a slot behind oneself would invert the lane order, which
    longitudinal control cannot execute.  ``ego`` needs position/speed
    (merge frame) and ``desired_speed``.
    """
    if role is Role.FOLLOWER:
        return consensus_accel(ego, competitor, controller, accel_min, accel_max)
    if leader_target is not None and leader_target.position > ego.position:
        return consensus_accel(ego, leader_target, controller, accel_min, accel_max)
    return free_flow_accel(
        ego.speed, ego.desired_speed, controller.free_flow_gain, accel_min, accel_max
    )


def action_cost(
    side: Side,
    role: Role,
    ego: PlayerKinematics,
    comp: PlayerKinematics,
    candidate: float,
    d_end: float,
    params: GameParams,
) -> ActionEvaluation:
    """Cost of one action: risk plus mobility (plus urgency on the ramp).

    The pair is oriented by predicted position: whichever player is
    predicted ahead after ``prediction_dt`` plays the preceding slot of the
    TTC/headway terms, the other the rear slot.
    """
    dt = params.prediction_dt
    t_h = params.safe_time_headway
    ego_pos_pred = ego.position + _predicted_travel(ego.speed, candidate, dt)
    comp_pos_pred = comp.position + _predicted_travel(comp.speed, comp.accel, dt)
    if ego_pos_pred > comp_pos_pred:
        # ego predicted ahead: the competitor is the rear vehicle
        gap_now = (ego.position - ego.length) - comp.position
        risk1, ttc, headway, gap_pred = _safety_terms(
            gap_now, comp.speed, ego.speed, comp.accel, candidate,
            dt, t_h, params.eq3_literal_sign,
        )
    else:
        gap_now = (comp.position - comp.length) - ego.position
        risk1, ttc, headway, gap_pred = _safety_terms(
            gap_now, ego.speed, comp.speed, candidate, comp.accel,
            dt, t_h, params.eq3_literal_sign,
        )
    mobility = mobility_cost(candidate * dt, ego.speed)
    if side is Side.RAMP:
        risk_d2e = distance_risk(d_end, ego.speed, t_h)
        total = (risk1 + risk_d2e) / 2.0 + mobility
    else:
        risk_d2e = None
        total = risk1 + mobility
    return ActionEvaluation(
        role=role,
        candidate_accel=candidate,
        predicted_gap=gap_pred,
        predicted_ttc=ttc,
        predicted_headway=headway,
        risk1=risk1,
        risk_d2e=risk_d2e,
        mobility=mobility,
        total_cost=total,
    )


def solve_noncooperative(cost_lead: float, cost_follow: float) -> Role:
    """Pick the cheaper of the player's own actions; ties yield."""
    if cost_lead < cost_follow:
        return Role.LEADER
    return Role.FOLLOWER


def solve_cooperative(
    ego_lead: float,
    ego_follow: float,
    comp_lead: float,
    comp_follow: float,
) -> tuple[Role, Role]:
    """Minimize the pair's summed cost over the two feasible role splits.

    Returns (ego role, competitor role).  Callers pass the ramp player as
    ego; an exact tie resolves to the ramp vehicle yielding.
    """
    ego_leads = ego_lead + comp_follow
    ego_follows = ego_follow + comp_lead
    if ego_leads < ego_follows:
        return (Role.LEADER, Role.FOLLOWER)
    return (Role.FOLLOWER, Role.LEADER)


@dataclass
class PlayerContext:
    """Everything the resolver needs to know about one player."""

    vehicle_id: int
    side: Side
    is_cav: bool
    position: float  # merge frame, front bumper
    speed: float
    accel: float
    length: float  # physical length (gap geometry)
    effective_length: float  # padded length other vehicles keep clear
    desired_speed: float
    predecessor: Optional[TargetSnapshot]  # vehicle ahead of this player


@dataclass(frozen=True)
class GameOutcome:
    """Resolved roles and follow targets for one pair."""

    ramp_role: Role
    mainline_role: Role
    ramp_target_id: Optional[int]
    mainline_target_id: Optional[int]
    solved_as: GameKind


@dataclass(frozen=True)
class GameResolution:
    outcome: GameOutcome
    ramp_command: Optional[float]  # chosen candidate accel (CAV players only)
    mainline_command: Optional[float]
    evaluations: dict  # (Side, Role) -> ActionEvaluation, CAV players only


def _as_snapshot(player: PlayerContext) -> TargetSnapshot:
    return TargetSnapshot(
        player.vehicle_id, player.position, player.speed, player.effective_length
    )


def _kinematics(player: PlayerContext, accel: Optional[float] = None) -> PlayerKinematics:
    return PlayerKinematics(
        player.position,
        player.speed,
        player.accel if accel is None else accel,
        player.length,
    )


def _lead_is_feasible(player: PlayerContext, other: PlayerContext) -> bool:
    """Whether the player can realistically end up ahead of the other.

    Claiming the leader role from behind is only meaningful while the
    player still beats the other to the merge point; otherwise the role
    demands an in-frame overtake that longitudinal control cannot deliver,
    and it gets the forbidden-cell price.
    """
    if player.position >= other.position:
        return True
    eta_player = -player.position / max(player.speed, SPEED_FLOOR)
    eta_other = -other.position / max(other.speed, SPEED_FLOOR)
    return eta_player < eta_other


def _evaluate(
    player: PlayerContext,
    other: PlayerContext,
    role: Role,
    d_end: float,
    controller: ControllerParams,
    params: GameParams,
    accel_min: float,
    accel_max: float,
) -> ActionEvaluation:
    candidate = candidate_accel(
        player,
        _as_snapshot(other),
        role,
        controller,
        leader_target=other.predecessor,
        accel_min=accel_min,
        accel_max=accel_max,
    )
    evaluation = action_cost(
        player.side,
        role,
        _kinematics(player, candidate),
        _kinematics(other),
        candidate,
        d_end,
        params,
    )
    if role is Role.LEADER and not _lead_is_feasible(player, other):
        return ActionEvaluation(
            role=evaluation.role,
            candidate_accel=evaluation.candidate_accel,
            predicted_gap=evaluation.predicted_gap,
            predicted_ttc=evaluation.predicted_ttc,
            predicted_headway=evaluation.predicted_headway,
            risk1=evaluation.risk1,
            risk_d2e=evaluation.risk_d2e,
            mobility=evaluation.mobility,
            total_cost=params.infinity_cost,
        )
    return evaluation


def _target_for(role: Role, player: PlayerContext, other: PlayerContext) -> Optional[int]:
    if role is Role.FOLLOWER:
        return other.vehicle_id
    pred = other.predecessor
    if pred is not None and pred.position > player.position:
        return pred.id
    return None


def resolve_game(
    ramp: PlayerContext,
    mainline: PlayerContext,
    d_end: float,
    controller: ControllerParams,
    params: GameParams,
    accel_min: float = ACCEL_MIN_DEFAULT,
    accel_max: float = ACCEL_MAX_DEFAULT,
) -> Optional[GameResolution]:
    """Resolve one conflicting pair into roles, targets and commands.

    Returns None when neither player is a CAV (no game to play).  The
    cooperative branch is a deterministic symmetric computation, so both
    CAVs evaluating it independently reach the same outcome.
    """
    evaluations: dict = {}

    def evaluate(player: PlayerContext, other: PlayerContext, role: Role):
        ev = _evaluate(
            player, other, role, d_end, controller, params, accel_min, accel_max
        )
        evaluations[(player.side, role)] = ev
        return ev

    if ramp.is_cav and mainline.is_cav:
        r_lead = evaluate(ramp, mainline, Role.LEADER)
        r_follow = evaluate(ramp, mainline, Role.FOLLOWER)
        m_lead = evaluate(mainline, ramp, Role.LEADER)
        m_follow = evaluate(mainline, ramp, Role.FOLLOWER)
        ramp_role, main_role = solve_cooperative(
            r_lead.total_cost,
            r_follow.total_cost,
            m_lead.total_cost,
            m_follow.total_cost,
        )
        outcome = GameOutcome(
            ramp_role=ramp_role,
            mainline_role=main_role,
            ramp_target_id=_target_for(ramp_role, ramp, mainline),
            mainline_target_id=_target_for(main_role, mainline, ramp),
            solved_as=GameKind.COOPERATIVE,
        )
        return GameResolution(
            outcome=outcome,
            ramp_command=evaluations[(Side.RAMP, ramp_role)].candidate_accel,
            mainline_command=evaluations[(Side.MAINLINE, main_role)].candidate_accel,
            evaluations=evaluations,
        )

    if not ramp.is_cav and not mainline.is_cav:
        return None

    cav, legacy = (ramp, mainline) if ramp.is_cav else (mainline, ramp)
    lead = evaluate(cav, legacy, Role.LEADER)
    follow = evaluate(cav, legacy, Role.FOLLOWER)
    cav_role = solve_noncooperative(lead.total_cost, follow.total_cost)
    other_role = Role.FOLLOWER if cav_role is Role.LEADER else Role.LEADER
    command = evaluations[(cav.side, cav_role)].candidate_accel
    if cav is ramp:
        outcome = GameOutcome(
            ramp_role=cav_role,
            mainline_role=other_role,
            ramp_target_id=_target_for(cav_role, cav, legacy),
            mainline_target_id=None,
            solved_as=GameKind.NONCOOPERATIVE,
        )
        return GameResolution(outcome, command, None, evaluations)
    outcome = GameOutcome(
        ramp_role=other_role,
        mainline_role=cav_role,
        ramp_target_id=None,
        mainline_target_id=_target_for(cav_role, cav, legacy),
        solved_as=GameKind.NONCOOPERATIVE,
    )
    return GameResolution(outcome, None, command, evaluations)
