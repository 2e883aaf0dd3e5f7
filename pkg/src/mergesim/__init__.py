"""Deterministic microscopic simulator of highway on-ramp merging in mixed
traffic, with game-theoretic merge coordination for connected automated
vehicles against a Krauss car-following baseline."""

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
    consensus_accel,
    free_flow_accel,
    integrate,
    krauss_speed,
)
from .engine import SimulationLog, Simulation, run
from .game import (
    ActionEvaluation,
    GameKind,
    GameOutcome,
    GameParams,
    Side,
    action_cost,
    candidate_accel,
    distance_risk,
    mobility_cost,
    predicted_ttc,
    resolve_game,
    safety_risk,
    solve_cooperative,
    solve_noncooperative,
)
from .metrics import (
    FuelParams,
    Group,
    aggregate,
    average_speed,
    fuel_per_mile,
    fuel_rate,
    trip_fuel,
)
from .scenario import (
    DepartureSchedule,
    NetworkGeometry,
    ScenarioConfig,
    build_network,
    generate_departures,
    parse_scenario,
)

__version__ = "0.1.0"
