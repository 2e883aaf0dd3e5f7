"""Per-timestep simulation pipeline.

Each step runs, in order: spawn due departures, freeze the sensing snapshot,
predict conflicts and form pairs, resolve games, compute longitudinal
commands, integrate, execute merges and avoidance lane changes, then log and
verify the no-collision invariant.  All sensing in stages 3-5 reads the
pre-integration state, so the outcome does not depend on vehicle iteration
order within a step.

Two engine conventions matter for how the control laws behave in traffic:

* every leader handed to a car-following law carries an effective length of
  its physical length plus the standstill minimum gap, so queues keep the
  configured low-speed spacing and merge slots stay openable;
* lane insertions (ramp merges and avoidance changes) must pass, besides the
  lead/lag gap acceptance, a braking-feasibility guard on the lag vehicle,
  which is what keeps the run collision-free when a slow vehicle drops into
  a fast lane.
"""

from __future__ import annotations

import math
import sys
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .conflict import (
    ConflictPair,
    MergeFrameProjection,
    pair_game_kind,
    predict_conflict,
    project_to_merge_frame,
)
from .dynamics import (
    Command,
    ControllerParams,
    KraussParams,
    Lane,
    Role,
    TargetSnapshot,
    VehicleClass,
    VehicleState,
    clamp,
    consensus_accel,
    free_flow_accel,
    integrate,
    krauss_safe_speed,
)
from .errors import CollisionDetected, NonTermination
from .game import (
    GameKind,
    GameResolution,
    PlayerContext,
    Side,
    resolve_game,
)
from .metrics import fuel_rate
from .scenario import (
    DepartureEntry,
    NetworkGeometry,
    ScenarioConfig,
    build_network,
    generate_departures,
    vehicle_noise_stream,
)

WALL_MARGIN = 0.5  # m left free before the merge-zone end wall
MERGER_LOOKAHEAD = 6.0  # s; a CAV yields to a ramp vehicle this close to merging
MERGE_SLACK = 0.5  # m of standstill spacing beyond min_gap; keeps a queued
# yielder's gap strictly above the gap-acceptance threshold at v = 0
SPAWN_SPEED_FACTOR = 0.9  # a departure waits until it can enter at this
# share of its configured initial speed; entering slower ratchets the whole
# entry region down during demand bunches
MIN_YIELD_SPEED = 10.0  # m/s; nobody opens a slot for a (near-)stalled
# merger - a stopped ramp queue works itself in through gap lulls instead
# of stopping the through lane
LEGACY_DECISION_PERIOD = 1.0  # s between a human driver's lane-change /
# merge decisions; automated vehicles re-evaluate every step
LEGACY_GAP_SEEK_RANGE = 120.0  # m; how far out a human merger starts
# aligning itself behind a through vehicle's slot
URGENCY_WAIT = 2.5  # s of standing at the zone end before a merger starts
# forcing itself into any gap its lag vehicle can physically brake for
_DIAG_STEPS = 50  # history depth kept for collision diagnostics (~1 s)


@dataclass(frozen=True)
class TripRecord:
    id: int
    vehicle_class: VehicleClass
    origin: Lane
    depart_s: float
    arrival_s: Optional[float]
    distance_m: float
    fuel_g: float


@dataclass(frozen=True)
class TrajectoryPoint:
    id: int
    t_s: float
    lane: Lane
    pos_m: float
    speed_mps: float
    accel_mps2: float
    role: Role
    target_id: Optional[int]


@dataclass(frozen=True)
class GameTraceRecord:
    t_s: float
    ego_id: int
    comp_id: int
    kind: GameKind
    ego_role: Role
    ego_cost_lead: float
    ego_cost_follow: float
    comp_cost_lead: Optional[float]
    comp_cost_follow: Optional[float]
    risk1: float
    risk_d2e: Optional[float]
    mobility: float


@dataclass
class SimulationLog:
    trips: list[TripRecord] = field(default_factory=list)
    trajectories: list[TrajectoryPoint] = field(default_factory=list)
    games: list[GameTraceRecord] = field(default_factory=list)
    spawned: int = 0
    completed: int = 0
    end_time: float = 0.0
    min_same_lane_gap: float = math.inf


@dataclass
class PairState:
    pair: ConflictPair
    resolution: Optional[GameResolution]
    resolved_at: float


class Simulation:
    """One deterministic run of a scenario."""

    def __init__(
        self,
        config: ScenarioConfig,
        trajectory_decimation: int = 0,
        record_games: bool = False,
        schedule=None,
    ):
        config.validate()
        self.config = config
        self.geometry: NetworkGeometry = build_network(config)
        self.dt = config.timestep
        self.pad = config.min_gap + MERGE_SLACK
        if schedule is None:
            schedule = generate_departures(config)
        self.pending: dict[Lane, deque] = {lane: deque() for lane in Lane}
        for vid, entry in enumerate(schedule.entries):
            self.pending[entry.origin].append((vid, entry))
        self._next_manual_id = len(schedule.entries)
        self.vehicles: dict[int, VehicleState] = {}
        self.lane_order: dict[Lane, list[int]] = {lane: [] for lane in Lane}
        self.pairs: dict[int, PairState] = {}  # keyed by ramp vehicle id
        self.claimed: dict[int, int] = {}  # mainline id -> ramp id
        self.step_count = 0
        self.trajectory_decimation = trajectory_decimation
        self.record_games = record_games
        self.log = SimulationLog()
        self._noise = {}
        self._zone_wait: dict[int, float] = {}
        self._legacy_plan: dict[int, tuple[float, float, int]] = {}
        self._action_krauss = replace(
            config.krauss, timestep=LEGACY_DECISION_PERIOD
        )
        delay_steps = int(config.controller.comm_delay / self.dt)
        self._delay_steps = delay_steps
        self.history: deque = deque(maxlen=max(delay_steps + 1, _DIAG_STEPS))
        # shared braking reserve below the hard maximum: the wall approach
        # law, the following envelope, the insertion guard and the legacy
        # deceleration bound all stay inside it, so nobody is ever asked to
        # brake harder than the chain behind them can absorb
        self._wall_decel = 0.8 * config.krauss.max_decel

    # -- public API ---------------------------------------------------------

    @property
    def sim_time(self) -> float:
        return self.step_count * self.dt

    def add_vehicle(
        self,
        lane: Lane,
        position: float,
        speed: float,
        vehicle_class: VehicleClass = VehicleClass.CAV,
        driver_sigma: float = 0.0,
        desired_speed: Optional[float] = None,
        length: float = 5.0,
    ) -> VehicleState:
        """Inject a vehicle directly; used by scripted scenes and tests."""
        vid = self._next_manual_id
        self._next_manual_id += 1
        state = VehicleState(
            id=vid,
            vehicle_class=vehicle_class,
            lane=lane,
            position=position,
            speed=speed,
            length=length,
            driver_sigma=driver_sigma,
            desired_speed=(
                self.config.desired_speed if desired_speed is None else desired_speed
            ),
            depart_time=self.sim_time,
            origin=lane,
        )
        self.vehicles[vid] = state
        insort(self.lane_order[lane], vid, key=lambda i: self.vehicles[i].position)
        self.log.spawned += 1
        return state

    def run(self) -> SimulationLog:
        limit = 3.0 * self.config.duration
        while True:
            if self.sim_time >= self.config.duration and self._network_empty():
                break
            if self.sim_time > limit:
                raise NonTermination(
                    f"network not empty after {self.sim_time:.0f} s "
                    f"({len(self.vehicles)} vehicles, "
                    f"{sum(len(q) for q in self.pending.values())} pending)"
                )
            self.step()
        self.log.end_time = self.sim_time
        return self.log

    def step(self) -> None:
        t = self.sim_time
        self._spawn_due(t)
        self._snapshot()
        self._update_pairs(t)
        commands = self._compute_commands()
        self._integrate_all(commands)
        self._execute_merges()
        self._execute_avoidance()
        self._finalize(t)
        self.step_count += 1

    # -- stage 1: spawning ----------------------------------------------------

    def _network_empty(self) -> bool:
        return not self.vehicles and all(not q for q in self.pending.values())

    def _entry_speed(self, lane: Lane, cap: float) -> float:
        """Speed a new vehicle could enter the lane with right now."""
        order = self.lane_order[lane]
        if not order:
            return cap
        tail = self.vehicles[order[0]]
        if tail.position - tail.length < self.config.min_gap + 5.0:
            return -1.0  # entry cell occupied
        gap = tail.position - tail.length
        safe = krauss_safe_speed(gap, tail.speed, cap, self.config.krauss)
        return max(0.0, min(cap, safe))

    def _spawn_due(self, t: float) -> None:
        cfg = self.config
        for lane in (Lane.RAMP, Lane.MAINLINE_RIGHT, Lane.MAINLINE_LEFT):
            base = (
                cfg.initial_speed_ramp
                if lane is Lane.RAMP
                else cfg.initial_speed_mainline
            )
            queue = self.pending[lane]
            while queue and queue[0][1].depart_time <= t:
                vid, entry = queue[0]
                speed = self._entry_speed(lane, base)
                if speed < SPAWN_SPEED_FACTOR * base:
                    break  # FIFO per origin: a blocked head delays the rest
                queue.popleft()
                self._spawn(vid, entry, lane, t, speed)

    def _spawn(
        self, vid: int, entry: DepartureEntry, lane: Lane, t: float, speed: float
    ) -> None:
        cfg = self.config
        desired = (
            min(cfg.desired_speed, self.geometry.speed_limit)
            * entry.desired_speed_multiplier
        )
        speed = min(speed, desired)
        state = VehicleState(
            id=vid,
            vehicle_class=entry.vehicle_class,
            lane=lane,
            position=0.0,
            speed=speed,
            driver_sigma=entry.driver_sigma,
            desired_speed=desired,
            depart_time=t,
            origin=lane,
        )
        self.vehicles[vid] = state
        self.lane_order[lane].insert(0, vid)  # position 0: always rearmost
        self.log.spawned += 1

    # -- stage 2: sensing snapshot ---------------------------------------------

    def _snapshot(self) -> None:
        self.history.append(
            {
                vid: (v.lane, v.position, v.speed, v.accel, v.length)
                for vid, v in self.vehicles.items()
            }
        )

    def _delayed_target(self, target_id: int) -> Optional[TargetSnapshot]:
        """Merge-frame snapshot of a target, aged by the communication delay."""
        idx = len(self.history) - 1 - self._delay_steps
        if idx < 0:
            idx = 0
        for i in range(idx, len(self.history)):
            rec = self.history[i].get(target_id)
            if rec is not None:
                lane, pos, speed, _, length = rec
                return TargetSnapshot(
                    target_id,
                    pos - self.geometry.merge_point(lane),
                    speed,
                    length + self.pad,
                )
        return None

    # -- stages 3-4: conflict pairing and games ---------------------------------

    def _predecessor_snapshot(
        self, lane: Lane, index: int
    ) -> Optional[TargetSnapshot]:
        """The vehicle ahead of lane_order[lane][index], padded, merge frame."""
        order = self.lane_order[lane]
        if index + 1 >= len(order):
            return None
        pred = self.vehicles[order[index + 1]]
        ego = self.vehicles[order[index]]
        if pred.position - ego.position > self.config.conflict.detection_range:
            return None
        return TargetSnapshot(
            pred.id,
            pred.position - self.geometry.merge_point(lane),
            pred.speed,
            pred.length + self.pad,
        )

    def _player_context(self, state: VehicleState, side: Side) -> PlayerContext:
        lane_index = self.lane_order[state.lane].index(state.id)
        return PlayerContext(
            vehicle_id=state.id,
            side=side,
            is_cav=state.is_cav,
            position=state.position - self.geometry.merge_point(state.lane),
            speed=state.speed,
            accel=state.accel,
            length=state.length,
            effective_length=state.length + self.pad,
            desired_speed=state.desired_speed,
            predecessor=self._predecessor_snapshot(state.lane, lane_index),
        )

    def _update_pairs(self, t: float) -> None:
        cfg = self.config
        geo = self.geometry
        commitment = cfg.game.commitment

        held: dict[int, PairState] = {}
        for ramp_id, ps in self.pairs.items():
            ramp = self.vehicles.get(ramp_id)
            main = self.vehicles.get(ps.pair.mainline_vehicle_id)
            if (
                commitment > 0.0
                and ramp is not None
                and main is not None
                and ramp.lane is Lane.RAMP
                and main.lane is Lane.MAINLINE_RIGHT
                and (t - ps.resolved_at) < commitment
            ):
                held[ramp_id] = ps
        self.pairs = held
        self.claimed = {
            ps.pair.mainline_vehicle_id: rid for rid, ps in held.items()
        }

        # candidate mainline vehicles, unclaimed, within detection range
        candidates: list[tuple[MergeFrameProjection, VehicleState]] = []
        for vid in self.lane_order[Lane.MAINLINE_RIGHT]:
            if vid in self.claimed:
                continue
            state = self.vehicles[vid]
            d = geo.merge_point(Lane.MAINLINE_RIGHT) - state.position
            if -geo.merge_zone_length <= d <= cfg.conflict.detection_range:
                candidates.append((project_to_merge_frame(state, geo), state))

        ramp_projs = []
        for vid in self.lane_order[Lane.RAMP]:
            if vid in self.pairs:
                continue
            state = self.vehicles[vid]
            proj = project_to_merge_frame(state, geo)
            if proj.distance_to_merge < 0.0 and state.speed < MIN_YIELD_SPEED:
                # a (near-)stalled vehicle already inside the zone books no
                # mainline yield; it works itself in through gap lulls
                continue
            ramp_projs.append((proj, state))
        ramp_projs.sort(key=lambda item: (item[0].eta, item[0].vehicle_id))

        for proj, state in ramp_projs:
            if not candidates:
                break
            pair = predict_conflict(
                proj,
                state,
                candidates,
                geo,
                cfg.conflict.horizon,
                cfg.conflict.window,
            )
            if pair is None:
                continue
            candidates = [
                c for c in candidates if c[0].vehicle_id != pair.mainline_vehicle_id
            ]
            resolution = None
            if pair.game_kind is not GameKind.NO_GAME:
                main_state = self.vehicles[pair.mainline_vehicle_id]
                resolution = resolve_game(
                    self._player_context(state, Side.RAMP),
                    self._player_context(main_state, Side.MAINLINE),
                    pair.d_end,
                    self._pair_controller(pair.game_kind),
                    cfg.game,
                    cfg.accel_min,
                    cfg.accel_max,
                )
            ps = PairState(pair=pair, resolution=resolution, resolved_at=t)
            self.pairs[pair.ramp_vehicle_id] = ps
            self.claimed[pair.mainline_vehicle_id] = pair.ramp_vehicle_id
            if resolution is not None:
                self._apply_outcome(ps)
                if self.record_games:
                    self._trace_game(t, ps)

        # clear stale roles on vehicles that lost their pair
        paired_members = set(self.pairs) | set(self.claimed)
        for vid, state in self.vehicles.items():
            if state.role is not Role.UNASSIGNED and vid not in paired_members:
                state.role = Role.UNASSIGNED
                state.target_id = None

    def _apply_outcome(self, ps: PairState) -> None:
        outcome = ps.resolution.outcome
        ramp = self.vehicles[ps.pair.ramp_vehicle_id]
        main = self.vehicles[ps.pair.mainline_vehicle_id]
        if ramp.is_cav:
            ramp.role = outcome.ramp_role
            ramp.target_id = outcome.ramp_target_id
        if main.is_cav:
            main.role = outcome.mainline_role
            main.target_id = outcome.mainline_target_id

    def _trace_game(self, t: float, ps: PairState) -> None:
        res = ps.resolution
        outcome = res.outcome
        ramp_id = ps.pair.ramp_vehicle_id
        main_id = ps.pair.mainline_vehicle_id
        if outcome.solved_as is GameKind.COOPERATIVE:
            ego_side, ego_id, comp_id = Side.RAMP, ramp_id, main_id
            ego_role = outcome.ramp_role
            comp_lead = res.evaluations[(Side.MAINLINE, Role.LEADER)].total_cost
            comp_follow = res.evaluations[(Side.MAINLINE, Role.FOLLOWER)].total_cost
        else:
            ramp_is_cav = self.vehicles[ramp_id].is_cav
            ego_side = Side.RAMP if ramp_is_cav else Side.MAINLINE
            ego_id, comp_id = (ramp_id, main_id) if ramp_is_cav else (main_id, ramp_id)
            ego_role = outcome.ramp_role if ramp_is_cav else outcome.mainline_role
            comp_lead = comp_follow = None
        chosen = res.evaluations[(ego_side, ego_role)]
        self.log.games.append(
            GameTraceRecord(
                t_s=t,
                ego_id=ego_id,
                comp_id=comp_id,
                kind=outcome.solved_as,
                ego_role=ego_role,
                ego_cost_lead=res.evaluations[(ego_side, Role.LEADER)].total_cost,
                ego_cost_follow=res.evaluations[(ego_side, Role.FOLLOWER)].total_cost,
                comp_cost_lead=comp_lead,
                comp_cost_follow=comp_follow,
                risk1=chosen.risk1,
                risk_d2e=chosen.risk_d2e,
                mobility=chosen.mobility,
            )
        )

    # -- stage 5: command computation -------------------------------------------

    def _pair_controller(self, kind: GameKind) -> ControllerParams:
        """Consensus gains used while a pair stages its merge.

        The consensus law's desired time gap is time-variant.  Against a
        legacy competitor there is no cooperating partner, so the CAV stages
        with the tighter gap-acceptance spacing and lets the full platooning
        gap re-form after the physical lane change; two CAVs plan the full
        gap from the start.
        """
        cfg = self.config
        if kind is GameKind.NONCOOPERATIVE:
            return replace(cfg.controller, time_gap=cfg.merge.t_gap_safe)
        return cfg.controller

    def _game_command(self, state: VehicleState, ps: PairState) -> Optional[float]:
        """The paired CAV's game-chosen acceleration for this step."""
        res = ps.resolution
        if res is None:
            return None
        if ps.resolved_at == self.sim_time:
            # freshly resolved this step: reuse the chosen candidate accel
            if state.id == ps.pair.ramp_vehicle_id:
                return res.ramp_command
            return res.mainline_command
        # held outcome (commitment window): re-derive from the stored role
        cfg = self.config
        if state.role is not Role.UNASSIGNED and state.target_id is not None:
            target = self._delayed_target(state.target_id)
            if target is not None:
                ego = _FramePoint(
                    state.position - self.geometry.merge_point(state.lane),
                    state.speed,
                )
                return consensus_accel(
                    ego,
                    target,
                    self._pair_controller(ps.pair.game_kind),
                    cfg.accel_min,
                    cfg.accel_max,
                )
        return None

    def _imminent_mergers(self) -> list[tuple[float, VehicleState]]:
        """Ramp vehicles still moving and close to merging.

        CAVs announce the upcoming merge over V2V; a legacy merger is picked
        up by the radar of the right-lane CAV behind its slot.  Either way
        only CAVs react, and nobody opens a slot for a (near-)stalled
        merger - a stopped queue works itself in through gap lulls and the
        urgency rule instead of stopping the through lane.
        """
        geo = self.geometry
        out = []
        for vid in self.lane_order[Lane.RAMP]:
            state = self.vehicles[vid]
            if state.speed < MIN_YIELD_SPEED:
                continue
            d = geo.merge_point(Lane.RAMP) - state.position
            if max(d, 0.0) <= MERGER_LOOKAHEAD * max(state.speed, 0.1):
                out.append((-d, state))
        return out

    def _compute_commands(self) -> list[tuple[VehicleState, Command]]:
        cfg = self.config
        krauss = cfg.krauss
        pair_of: dict[int, PairState] = {}
        for ps in self.pairs.values():
            pair_of[ps.pair.ramp_vehicle_id] = ps
            pair_of[ps.pair.mainline_vehicle_id] = ps
        yields = self._assign_merger_yields(pair_of)

        commands: list[tuple[VehicleState, Command]] = []
        for lane in (Lane.RAMP, Lane.MAINLINE_RIGHT, Lane.MAINLINE_LEFT):
            order = self.lane_order[lane]
            for idx, vid in enumerate(order):
                state = self.vehicles[vid]
                pred = (
                    self.vehicles[order[idx + 1]] if idx + 1 < len(order) else None
                )
                if state.vehicle_class is VehicleClass.LEGACY:
                    slot_front = None
                    if lane is Lane.RAMP:
                        slot_front = self._slot_front(state)
                    commands.append(
                        (state, self._legacy_command(state, pred, krauss, slot_front))
                    )
                else:
                    commands.append(
                        (
                            state,
                            self._cav_command(
                                state, pred, pair_of.get(vid), yields.get(vid)
                            ),
                        )
                    )
        return commands

    def _slot_front(self, state: VehicleState) -> Optional[TargetSnapshot]:
        """The mainline vehicle a legacy merger aligns itself behind.

        Human drivers on the approach adjust speed to tuck behind some
        through vehicle rather than arriving abreast of it; without this a
        merger in a regularly spaced stream never lines up with a slot.
        """
        d = self.geometry.merge_point(Lane.RAMP) - state.position
        if d > LEGACY_GAP_SEEK_RANGE:
            return None
        my_proj = -d
        order = self.lane_order[Lane.MAINLINE_RIGHT]
        merge_point = self.geometry.merge_point(Lane.MAINLINE_RIGHT)
        positions = [self.vehicles[v].position - merge_point for v in order]
        i = bisect_left(positions, my_proj)
        if i >= len(order):
            return None
        front = self.vehicles[order[i]]
        if positions[i] - my_proj > LEGACY_GAP_SEEK_RANGE:
            return None
        return TargetSnapshot(
            front.id, positions[i], front.speed, front.length + self.pad
        )

    def _assign_merger_yields(
        self, pair_of: dict[int, PairState]
    ) -> dict[int, VehicleState]:
        """Map each imminent merger to its immediate lag right-lane CAV.

        Only the vehicle directly behind a merger's slot yields to it; the
        rest of the lane follows that yielder through normal car following.
        A CAV that the game made leader over the merger is exempt, as is one
        that can no longer stop behind the slot.
        """
        mergers = self._imminent_mergers()
        if not mergers:
            return {}
        merge_point = self.geometry.merge_point(Lane.MAINLINE_RIGHT)
        order = self.lane_order[Lane.MAINLINE_RIGHT]
        cavs = []  # ascending projected position
        for vid in order:
            state = self.vehicles[vid]
            if state.is_cav:
                cavs.append((state.position - merge_point, state))
        if not cavs:
            return {}
        assigned: dict[int, VehicleState] = {}
        positions = [pos for pos, _ in cavs]
        for proj, merger in sorted(mergers):
            i = bisect_left(positions, proj)
            while i > 0:
                lag_pos, lag = cavs[i - 1]
                if proj - lag_pos > self.config.conflict.detection_range:
                    break
                ps = pair_of.get(lag.id)
                leads_this_merger = (
                    ps is not None
                    and ps.pair.ramp_vehicle_id == merger.id
                    and lag.role is Role.LEADER
                )
                if not leads_this_merger:
                    current = assigned.get(lag.id)
                    if current is None or merger.position < current.position:
                        assigned[lag.id] = merger
                    break
                i -= 1  # the exempt leader passes; the next CAV back yields
        return assigned

    def _legacy_safe_speed(
        self,
        state: VehicleState,
        pred: Optional[VehicleState],
        krauss: KraussParams,
        slot_front: Optional[TargetSnapshot],
    ) -> float:
        v_safe = math.inf
        if pred is not None:
            gap = pred.position - state.position - (pred.length + self.pad)
            if gap < 0.0:
                gap = 0.0  # entry squeeze; safe speed collapses to a crawl
            v_safe = krauss_safe_speed(gap, pred.speed, state.speed, krauss)
        if slot_front is not None:
            my_proj = state.position - self.geometry.merge_point(state.lane)
            gap = slot_front.position - slot_front.length - my_proj
            if gap < 0.0:
                gap = 0.0
            v_safe = min(
                v_safe,
                krauss_safe_speed(gap, slot_front.speed, state.speed, krauss),
            )
        if state.lane is Lane.RAMP:
            wall_gap = self.geometry.ramp_end - state.position
            v_safe = min(
                v_safe, krauss_safe_speed(max(wall_gap, 0.0), 0.0, state.speed, krauss)
            )
        return v_safe

    def _legacy_command(
        self,
        state: VehicleState,
        pred: Optional[VehicleState],
        krauss: KraussParams,
        slot_front: Optional[TargetSnapshot] = None,
    ) -> Command:
        """Action-step car following for a human driver.

        Humans commit to a speed decision about once a second, with the
        classic model evaluated at that cadence (so the dawdling term has
        its full, wave-generating amplitude), and track it smoothly in
        between.  The safe-speed bound is still enforced every substep so
        a braking leader is never ignored for a whole action period.
        """
        v_safe = self._legacy_safe_speed(state, pred, krauss, slot_front)
        plan = self._legacy_plan.get(state.id)
        if self._legacy_decision_tick(state.id) or plan is None:
            action = self._action_krauss
            v_target = min(
                v_safe,
                state.speed + action.accel_max * action.timestep,
                state.desired_speed,
            )
            if state.driver_sigma > 0.0:
                noise = self._noise.get(state.id)
                if noise is None:
                    noise = vehicle_noise_stream(self.config.seed, state.id)
                    self._noise[state.id] = noise
                v_target -= (
                    state.driver_sigma
                    * action.accel_max
                    * action.timestep
                    * noise.random()
                )
            v_target = max(0.0, v_target)
            plan = (state.speed, v_target, self.step_count)
            self._legacy_plan[state.id] = plan
        v_start, v_target, tick = plan
        period = max(1, int(round(LEGACY_DECISION_PERIOD / self.dt)))
        frac = min(1.0, (self.step_count - tick + 1) / period)
        v_next = min(v_start + (v_target - v_start) * frac, v_safe)
        # physical braking bound: an instant drop to the safe speed would
        # outrun what any follower can be expected to absorb; staying just
        # inside the followers' envelope reserve keeps the chain consistent
        v_next = max(v_next, state.speed - self._wall_decel * self.dt)
        return Command("speed", max(0.0, v_next))

    def _braking_envelope(self, ego_speed: float, gap_to_stop: float, target_speed: float) -> float:
        """Acceleration ceiling that keeps ego able to halt behind its target.

        ``gap_to_stop`` is how far ego may still advance relative to the
        target before reaching its standstill point; assuming both can brake
        at the reserve deceleration, the admissible speed follows from the
        usual kinematic bound.  Without this ceiling a fast approach on a
        (near-)stopped target overshoots the consensus equilibrium, and a
        vehicle cannot back out of a merge slot it rolled into.
        """
        v_sq = target_speed * target_speed + 2.0 * self._wall_decel * gap_to_stop
        v_allowed = math.sqrt(v_sq) if v_sq > 0.0 else 0.0
        return (v_allowed - ego_speed) / self.dt

    def _cav_command(
        self,
        state: VehicleState,
        pred: Optional[VehicleState],
        ps: Optional[PairState],
        merger: Optional[VehicleState] = None,
        slot_front: Optional[TargetSnapshot] = None,
    ) -> Command:
        cfg = self.config
        accel = None
        if ps is not None:
            accel = self._game_command(state, ps)
        if accel is None:
            accel = free_flow_accel(
                state.speed,
                state.desired_speed,
                cfg.controller.free_flow_gain,
                cfg.accel_min,
                cfg.accel_max,
            )
        # (gap_to_stop, target speed); same-lane entries always bind, a
        # cross-lane yield is dropped once ego can no longer stop behind the
        # slot (it passes in front and the other side re-plans instead)
        constraints: list[tuple[float, float]] = []
        if (
            pred is not None
            and pred.position - state.position <= cfg.conflict.detection_range
        ):
            ego = _FramePoint(state.position, state.speed)
            target = TargetSnapshot(
                pred.id, pred.position, pred.speed, pred.length + self.pad
            )
            follow = consensus_accel(
                ego, target, cfg.controller, cfg.accel_min, cfg.accel_max
            )
            if follow < accel:
                accel = follow
            constraints.append(
                (pred.position - (pred.length + self.pad) - state.position, pred.speed)
            )
        if merger is not None:
            merge_point = self.geometry.merge_point(Lane.MAINLINE_RIGHT)
            ego_pos = state.position - merge_point
            merger_pos = merger.position - self.geometry.merge_point(Lane.RAMP)
            gap_to_stop = merger_pos - (merger.length + self.pad) - ego_pos
            if gap_to_stop >= 0.0:
                ego = _FramePoint(ego_pos, state.speed)
                target = TargetSnapshot(
                    merger.id, merger_pos, merger.speed, merger.length + self.pad
                )
                # the pre-merge courtesy gap only needs to satisfy the
                # merger's own gap acceptance (a hesitant human wants more
                # room than a CAV); the full platooning gap re-forms after
                # the physical lane change
                t_court = (
                    cfg.merge.t_gap_safe if merger.is_cav else cfg.merge.legacy_t_gap
                )
                follow = consensus_accel(
                    ego,
                    target,
                    replace(cfg.controller, time_gap=t_court),
                    cfg.accel_min,
                    cfg.accel_max,
                )
                if follow < accel:
                    accel = follow
                constraints.append((gap_to_stop, merger.speed))
        if state.role is not Role.UNASSIGNED and state.target_id is not None:
            target = self._delayed_target(state.target_id)
            if target is not None:
                ego_pos = state.position - self.geometry.merge_point(state.lane)
                gap_to_stop = target.position - target.length - ego_pos
                if gap_to_stop >= 0.0:
                    constraints.append((gap_to_stop, target.speed))
        if slot_front is not None:
            ego_pos = state.position - self.geometry.merge_point(state.lane)
            gap_to_stop = slot_front.position - slot_front.length - ego_pos
            if gap_to_stop >= 0.0:
                ego = _FramePoint(ego_pos, state.speed)
                follow = consensus_accel(
                    ego,
                    slot_front,
                    replace(cfg.controller, time_gap=cfg.merge.t_gap_safe),
                    cfg.accel_min,
                    cfg.accel_max,
                )
                if follow < accel:
                    accel = follow
                constraints.append((gap_to_stop, slot_front.speed))
        for gap_to_stop, target_speed in constraints:
            envelope = self._braking_envelope(state.speed, gap_to_stop, target_speed)
            if envelope < accel:
                accel = envelope
        if state.speed > state.desired_speed:
            # speed-limit governor: a follower closing a large gap must not
            # chase its target past the vehicle's own desired speed
            governor = free_flow_accel(
                state.speed,
                state.desired_speed,
                cfg.controller.free_flow_gain,
                cfg.accel_min,
                cfg.accel_max,
            )
            if governor < accel:
                accel = governor
        if state.lane is Lane.RAMP:
            accel = min(accel, self._wall_accel(state))
        return Command("accel", clamp(accel, cfg.accel_min, cfg.accel_max))

    def _wall_accel(self, state: VehicleState) -> float:
        """Acceleration ceiling that keeps an unmerged vehicle short of the wall."""
        s_free = self.geometry.ramp_end - state.position - WALL_MARGIN
        if s_free <= 0.0:
            return -state.speed / self.dt
        v_allowed = math.sqrt(2.0 * self._wall_decel * s_free)
        return (v_allowed - state.speed) / self.dt

    # -- stage 6: integration ----------------------------------------------------

    def _integrate_all(self, commands: list[tuple[VehicleState, Command]]) -> None:
        dt = self.dt
        wall = self.geometry.ramp_end
        for state, command in commands:
            integrate(state, command, dt)
            if state.lane is Lane.RAMP and state.position > wall:
                overshoot = state.position - wall
                state.position = wall
                state.distance_traveled -= overshoot
                state.accel = -state.speed / dt if state.speed > 0.0 else 0.0
                state.speed = 0.0

    # -- stage 7: lane transitions -------------------------------------------------

    def _gap_acceptance(
        self,
        mover: VehicleState,
        target_pos: float,
        target_lane: Lane,
        allow_squeeze: bool = False,
    ) -> bool:
        """Lead/lag gap predicate plus the lag braking-feasibility guard.

        ``allow_squeeze`` admits a standstill fallback: when the mover and
        its would-be lag vehicle are both essentially stopped, any positive
        clearance is enough.  Queued-up merge areas would otherwise deadlock
        at the regular acceptance threshold, which a stopped queue can sit
        exactly at forever.
        """
        cfg = self.config
        order = self.lane_order[target_lane]
        positions = [self.vehicles[v].position for v in order]
        i = bisect_left(positions, target_pos)
        lead = self.vehicles[order[i]] if i < len(order) else None
        lag = self.vehicles[order[i - 1]] if i > 0 else None
        lead_gap = (
            lead.position - lead.length - target_pos if lead is not None else math.inf
        )
        lag_gap = (
            (target_pos - mover.length) - lag.position if lag is not None else math.inf
        )
        if allow_squeeze and mover.speed < 0.5:
            lag_stopped = lag is None or lag.speed < 0.5
            if lag_stopped and lead_gap > 0.5 and lag_gap > 0.5:
                return True
        urgent = (
            allow_squeeze
            and self._zone_wait.get(mover.id, 0.0) >= URGENCY_WAIT
        )
        if urgent:
            if lead_gap <= 1.0 + mover.speed * cfg.merge.t_gap_safe:
                return False
            if lag is None:
                return True
            if lag_gap <= 1.0:
                return False
            return self._lag_can_brake(mover, lag, lag_gap)
        t_safe = (
            cfg.merge.t_gap_safe if mover.is_cav else cfg.merge.legacy_t_gap
        )
        if lead_gap <= cfg.min_gap + mover.speed * t_safe:
            return False
        if lag is not None:
            # never force a human driver to brake for an inserted vehicle:
            # a legacy lag is owed its behavioral gap regardless of the mover
            t_lag = t_safe if lag.is_cav else cfg.merge.legacy_t_gap
            if lag_gap <= cfg.min_gap + lag.speed * t_lag:
                return False
            if not self._lag_can_brake(mover, lag, lag_gap):
                return False
        return True

    def _lag_can_brake(
        self, mover: VehicleState, lag: VehicleState, lag_gap: float
    ) -> bool:
        """Physical feasibility: the lag vehicle can brake out of a closing."""
        if lag.speed <= mover.speed:
            return True
        margin = lag_gap - 0.5 * self.config.min_gap
        if margin <= 0.0:
            return False
        needed = (lag.speed**2 - mover.speed**2) / (2.0 * margin)
        return needed <= self._wall_decel

    def _move_lane(self, state: VehicleState, new_lane: Lane, new_pos: float) -> None:
        self.lane_order[state.lane].remove(state.id)
        state.lane = new_lane
        state.position = new_pos
        order = self.lane_order[new_lane]
        positions = [self.vehicles[v].position for v in order]
        order.insert(bisect_left(positions, new_pos), state.id)

    def _dissolve_pair(self, ramp_id: int) -> None:
        ps = self.pairs.pop(ramp_id, None)
        if ps is None:
            return
        self.claimed.pop(ps.pair.mainline_vehicle_id, None)
        for vid in (ramp_id, ps.pair.mainline_vehicle_id):
            state = self.vehicles.get(vid)
            if state is not None:
                state.role = Role.UNASSIGNED
                state.target_id = None

    def _legacy_decision_tick(self, vid: int) -> bool:
        """Whether a human driver re-evaluates lane moves this step.

        Humans decide on a roughly one-second cadence (deterministic phase
        per vehicle) and miss gap windows shorter than that; automated
        vehicles re-evaluate every step.
        """
        period = max(1, int(round(LEGACY_DECISION_PERIOD / self.dt)))
        return (self.step_count + vid * 17) % period == 0

    def _execute_merges(self) -> None:
        geo = self.geometry
        merge_point = geo.merge_point(Lane.RAMP)
        for vid in list(reversed(self.lane_order[Lane.RAMP])):
            state = self.vehicles[vid]
            if state.position < merge_point:
                break  # list is position-sorted; the rest are upstream
            if not state.is_cav and not self._legacy_decision_tick(vid):
                continue
            target_pos = geo.ramp_to_mainline(state.position)
            if state.role is Role.FOLLOWER and state.target_id is not None:
                target = self.vehicles.get(state.target_id)
                if (
                    target is not None
                    and target.lane is Lane.MAINLINE_RIGHT
                    and target.position <= target_pos
                ):
                    continue  # wait until the assigned leader is ahead
            if not self._gap_acceptance(
                state, target_pos, Lane.MAINLINE_RIGHT, allow_squeeze=True
            ):
                continue
            self._move_lane(state, Lane.MAINLINE_RIGHT, target_pos)
            self._dissolve_pair(vid)

    def _execute_avoidance(self) -> None:
        """Legacy right-laners move left to dodge merge turbulence.

        A driver changes when the right lane is actually slowing it down
        (its car-following constraint, including a conflicting ramp vehicle
        it is paired against, sits below its current speed) and the left
        lane offers strictly better speed plus an acceptable gap.  Checked
        on the human decision cadence.
        """
        cfg = self.config
        geo = self.geometry
        krauss = cfg.krauss
        order = self.lane_order[Lane.MAINLINE_RIGHT]
        claimed_by = {main: ramp for main, ramp in self.claimed.items()}
        for idx in range(len(order) - 1, -1, -1):
            main_id = order[idx]
            state = self.vehicles[main_id]
            if state.vehicle_class is not VehicleClass.LEGACY:
                continue
            if not self._legacy_decision_tick(main_id):
                continue
            v_right = math.inf
            if idx + 1 < len(order):
                pred = self.vehicles[order[idx + 1]]
                gap = pred.position - state.position - (pred.length + self.pad)
                v_right = krauss_safe_speed(
                    max(gap, 0.0), pred.speed, state.speed, krauss
                )
            ramp_id = claimed_by.get(main_id)
            ramp = self.vehicles.get(ramp_id) if ramp_id is not None else None
            if ramp is not None and ramp.lane is Lane.RAMP:
                ramp_pos = geo.ramp_to_mainline(ramp.position)
                if ramp_pos > state.position:
                    gap = ramp_pos - state.position - (ramp.length + self.pad)
                    v_right = min(
                        v_right,
                        krauss_safe_speed(
                            max(gap, 0.0), ramp.speed, state.speed, krauss
                        ),
                    )
            if v_right >= state.speed:
                continue  # the right lane is not actually slowing it down
            v_left = math.inf
            order_left = self.lane_order[Lane.MAINLINE_LEFT]
            positions = [self.vehicles[v].position for v in order_left]
            i = bisect_left(positions, state.position)
            if i < len(order_left):
                pred = self.vehicles[order_left[i]]
                gap = pred.position - state.position - (pred.length + self.pad)
                v_left = krauss_safe_speed(
                    max(gap, 0.0), pred.speed, state.speed, krauss
                )
            if v_left <= v_right + 1.0:
                continue  # not enough to gain; avoids lane ping-pong
            if not self._gap_acceptance(state, state.position, Lane.MAINLINE_LEFT):
                continue
            self._move_lane(state, Lane.MAINLINE_LEFT, state.position)
            if ramp_id is not None:
                self._dissolve_pair(ramp_id)

    # -- stage 8: logging, arrivals, invariants --------------------------------

    def _finalize(self, t: float) -> None:
        cfg = self.config
        t_next = t + self.dt
        dec = self.trajectory_decimation
        log_now = dec > 0 and self.step_count % dec == 0
        merge_point = self.geometry.merge_point(Lane.RAMP)
        for state in self.vehicles.values():
            state.fuel_g += fuel_rate(state.speed, state.accel, cfg.fuel) * self.dt
            if state.lane is Lane.RAMP and state.position >= merge_point:
                if state.speed < 1.0:
                    self._zone_wait[state.id] = (
                        self._zone_wait.get(state.id, 0.0) + self.dt
                    )
            elif state.id in self._zone_wait:
                del self._zone_wait[state.id]
            if log_now:
                self.log.trajectories.append(
                    TrajectoryPoint(
                        id=state.id,
                        t_s=t_next,
                        lane=state.lane,
                        pos_m=state.position,
                        speed_mps=state.speed,
                        accel_mps2=state.accel,
                        role=state.role,
                        target_id=state.target_id,
                    )
                )
        for lane in (Lane.MAINLINE_RIGHT, Lane.MAINLINE_LEFT):
            order = self.lane_order[lane]
            end = self.geometry.mainline_end
            while order and self.vehicles[order[-1]].position >= end:
                vid = order.pop()
                state = self.vehicles.pop(vid)
                state.arrival_time = t_next
                self._noise.pop(vid, None)
                self._legacy_plan.pop(vid, None)
                if vid in self.pairs:
                    self._dissolve_pair(vid)
                if vid in self.claimed:
                    self._dissolve_pair(self.claimed[vid])
                self.log.trips.append(
                    TripRecord(
                        id=vid,
                        vehicle_class=state.vehicle_class,
                        origin=state.origin,
                        depart_s=state.depart_time,
                        arrival_s=state.arrival_time,
                        distance_m=state.distance_traveled,
                        fuel_g=state.fuel_g,
                    )
                )
                self.log.completed += 1
        self._check_collisions(t_next)

    def _check_collisions(self, t_next: float) -> None:
        for lane in Lane:
            order = self.lane_order[lane]
            for rear_id, front_id in zip(order, order[1:]):
                rear = self.vehicles[rear_id]
                front = self.vehicles[front_id]
                gap = front.position - front.length - rear.position
                if gap < self.log.min_same_lane_gap:
                    self.log.min_same_lane_gap = gap
                if gap <= 0.0:
                    self._dump_diagnostics(rear_id, front_id, t_next)
                    raise CollisionDetected(rear_id, front_id, t_next)

    def _dump_diagnostics(self, id_a: int, id_b: int, t_next: float) -> None:
        print(
            f"collision diagnostic at t={t_next:.2f}s between {id_a} and {id_b}; "
            f"last {len(self.history)} sensing snapshots:",
            file=sys.stderr,
        )
        t0 = t_next - len(self.history) * self.dt
        for k, snap in enumerate(self.history):
            for vid in (id_a, id_b):
                rec = snap.get(vid)
                if rec is not None:
                    lane, pos, speed, accel, _ = rec
                    print(
                        f"  t={t0 + k * self.dt:8.2f} id={vid} lane={lane.value} "
                        f"pos={pos:9.3f} v={speed:6.3f} a={accel:7.3f}",
                        file=sys.stderr,
                    )


class _FramePoint:
    """Minimal position/speed carrier for the consensus law."""

    __slots__ = ("position", "speed")

    def __init__(self, position: float, speed: float):
        self.position = position
        self.speed = speed


def run(
    config: ScenarioConfig,
    trajectory_decimation: int = 0,
    record_games: bool = False,
) -> SimulationLog:
    """Run one scenario to completion: spawn, simulate, clear, log."""
    return Simulation(
        config,
        trajectory_decimation=trajectory_decimation,
        record_games=record_games,
    ).run()
