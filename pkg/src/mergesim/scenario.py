"""Scenario configuration, merge-area geometry, and traffic demand.

A scenario file is flat UTF-8 ``key = value`` text with ``#`` comments.
Top-level keys are the ScenarioConfig field names; grouped parameters use a
dotted prefix (``controller.spacing_gain``, ``game.safe_time_headway``,
``fuel.mass``, ``network.merge_zone_length``, ...).  Unknown keys are
rejected, and invariant violations are errors instead of silent clamps so
that two hosts parsing the same file always agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional

import numpy as np

from .dynamics import ControllerParams, KraussParams, Lane, VehicleClass
from .errors import InvariantViolation, MalformedLine, UnknownKey
from .game import GameParams
from .metrics import FuelParams


@dataclass(frozen=True)
class NetworkGeometry:
    """Straight-segment merge layout.

    The ramp and the mainline each carry their own longitudinal frame
    starting at their spawn points; both frames place the merge point at
    their respective approach length, so a ramp coordinate converts to a
    mainline coordinate by shifting with the difference of the approaches.
    The drivable overlap (merge zone) extends ``merge_zone_length`` beyond
    the merge point; the mainline continues for ``downstream_length`` of
    recovery corridor past the zone before vehicles leave the network.
    """

    ramp_approach_length: float = 250.0
    mainline_approach_length: float = 280.0
    merge_zone_length: float = 89.0
    mainline_lane_count: int = 2
    speed_limit: float = 20.0
    downstream_length: float = 500.0

    def merge_point(self, lane: Lane) -> float:
        if lane is Lane.RAMP:
            return self.ramp_approach_length
        return self.mainline_approach_length

    @property
    def ramp_end(self) -> float:
        """End of the merge zone in ramp coordinates (hard wall if unmerged)."""
        return self.ramp_approach_length + self.merge_zone_length

    @property
    def mainline_end(self) -> float:
        """Exit coordinate of the mainline lanes."""
        return (
            self.mainline_approach_length
            + self.merge_zone_length
            + self.downstream_length
        )

    def lane_end(self, lane: Lane) -> float:
        return self.ramp_end if lane is Lane.RAMP else self.mainline_end

    def ramp_to_mainline(self, position: float) -> float:
        return position - self.ramp_approach_length + self.mainline_approach_length

    def validate(self) -> None:
        for name in (
            "ramp_approach_length",
            "mainline_approach_length",
            "merge_zone_length",
            "speed_limit",
        ):
            if getattr(self, name) <= 0.0:
                raise InvariantViolation(f"network.{name}", "must be strictly positive")
        if self.downstream_length < 0.0:
            raise InvariantViolation("network.downstream_length", "must be >= 0")
        if self.mainline_lane_count < 2:
            raise InvariantViolation(
                "network.mainline_lane_count", "needs at least two mainline lanes"
            )


@dataclass(frozen=True)
class ConflictParams:
    """Tunables of the conflict-prediction stage.

    The detection range matches a dedicated short-range V2V radio (~300 m)
    rather than an onboard radar; forming pairs across the whole approach
    gives a merge slot many seconds to open gently.
    """

    detection_range: float = 280.0
    window: float = 2.0
    horizon: float = 12.0


@dataclass(frozen=True)
class MergeParams:
    """Gap-acceptance tunables for lane transitions.

    Automated vehicles accept the physical safety minimum; human drivers
    hesitate and require a behavioral critical gap well above it, which is
    what lets merges degrade under congestion in the baseline.
    """

    t_gap_safe: float = 0.5
    legacy_t_gap: float = 0.7


@dataclass(frozen=True)
class ScenarioConfig:
    """Every tunable of one simulation run."""

    demand_vph: float = 1400.0
    penetration_rate: float = 0.0
    # 0.2 makes the merge-throat share (1+f)/2 = 0.6 of total demand, which
    # reproduces the advertised volume-to-capacity labels 0.35/0.60/0.85 for
    # 1400/2400/3400 vph against the 2400 vph throat capacity implied by the
    # setup's 20 m/s, 1 s headway and 5 m standstill gap.
    ramp_demand_fraction: float = 0.2
    duration: float = 1800.0
    timestep: float = 0.02
    seed: int = 1
    initial_speed_ramp: float = 15.0
    initial_speed_mainline: float = 20.0
    desired_speed: float = 20.0
    desired_time_headway: float = 1.0
    min_gap: float = 5.0
    accel_bounds: tuple[float, float] = (-5.0, 3.0)
    driver_sigma_range: tuple[float, float] = (0.2, 0.8)
    desired_speed_multiplier_range: tuple[float, float] = (0.9, 1.1)
    controller: ControllerParams = field(default_factory=ControllerParams)
    game: GameParams = field(default_factory=lambda: GameParams())
    krauss: KraussParams = field(default_factory=KraussParams)
    conflict: ConflictParams = field(default_factory=ConflictParams)
    merge: MergeParams = field(default_factory=MergeParams)
    fuel: FuelParams = field(default_factory=lambda: FuelParams())
    network: NetworkGeometry = field(default_factory=NetworkGeometry)

    @property
    def accel_min(self) -> float:
        return self.accel_bounds[0]

    @property
    def accel_max(self) -> float:
        return self.accel_bounds[1]

    def validate(self) -> None:
        if self.timestep <= 0.0:
            raise InvariantViolation("timestep", "must be > 0")
        if self.duration <= 0.0:
            raise InvariantViolation("duration", "must be > 0")
        if self.demand_vph < 0.0:
            raise InvariantViolation("demand_vph", "must be >= 0")
        if not 0.0 <= self.penetration_rate <= 1.0:
            raise InvariantViolation("penetration_rate", "must lie in [0, 1]")
        if not 0.0 < self.ramp_demand_fraction < 1.0:
            raise InvariantViolation("ramp_demand_fraction", "must lie in (0, 1)")
        a_min, a_max = self.accel_bounds
        if not a_min < 0.0 < a_max:
            raise InvariantViolation("accel_bounds", "need a_min < 0 < a_max")
        if self.min_gap <= 0.0:
            raise InvariantViolation("min_gap", "must be > 0")
        if self.desired_time_headway <= 0.0:
            raise InvariantViolation("desired_time_headway", "must be > 0")
        if self.initial_speed_ramp < 0.0 or self.initial_speed_mainline < 0.0:
            raise InvariantViolation("initial_speed", "must be >= 0")
        if self.desired_speed <= 0.0:
            raise InvariantViolation("desired_speed", "must be > 0")
        if not 0 <= self.seed < 2**64:
            raise InvariantViolation("seed", "must fit an unsigned 64-bit integer")
        lo, hi = self.driver_sigma_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvariantViolation("driver_sigma_range", "need 0 <= low <= high <= 1")
        mlo, mhi = self.desired_speed_multiplier_range
        if not 0.0 < mlo <= mhi:
            raise InvariantViolation(
                "desired_speed_multiplier_range", "need 0 < low <= high"
            )
        c = self.controller
        if c.spacing_gain <= 0.0 or c.speed_weight <= 0.0:
            raise InvariantViolation("controller", "gains must be > 0")
        if c.comm_delay < 0.0:
            raise InvariantViolation("controller.comm_delay", "must be >= 0")
        if c.time_gap <= 0.0:
            raise InvariantViolation("controller.time_gap", "must be > 0")
        if c.free_flow_gain <= 0.0:
            raise InvariantViolation("controller.free_flow_gain", "must be > 0")
        g = self.game
        if g.safe_time_headway <= 0.0:
            raise InvariantViolation("game.safe_time_headway", "must be > 0")
        if g.prediction_dt <= 0.0:
            raise InvariantViolation("game.prediction_dt", "must be > 0")
        if g.commitment < 0.0:
            raise InvariantViolation("game.commitment", "must be >= 0")
        k = self.krauss
        if k.reaction_time <= 0.0 or k.max_decel <= 0.0:
            raise InvariantViolation("krauss", "reaction_time and max_decel must be > 0")
        cf = self.conflict
        if cf.detection_range <= 0.0 or cf.window <= 0.0 or cf.horizon <= 0.0:
            raise InvariantViolation("conflict", "ranges and times must be > 0")
        if self.merge.t_gap_safe < 0.0:
            raise InvariantViolation("merge.t_gap_safe", "must be >= 0")
        if self.merge.legacy_t_gap < 0.0:
            raise InvariantViolation("merge.legacy_t_gap", "must be >= 0")
        f = self.fuel
        for name in (
            "mass",
            "drag_area",
            "air_density",
            "rolling_coeff",
            "gravity",
            "idle_rate",
            "energy_slope",
        ):
            if getattr(f, name) <= 0.0:
                raise InvariantViolation(f"fuel.{name}", "must be > 0")
        self.network.validate()


@dataclass(frozen=True)
class DepartureEntry:
    depart_time: float
    origin: Lane
    vehicle_class: VehicleClass
    driver_sigma: float
    desired_speed_multiplier: float


@dataclass(frozen=True)
class DepartureSchedule:
    entries: tuple[DepartureEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def count(self, origin: Optional[Lane] = None) -> int:
        if origin is None:
            return len(self.entries)
        return sum(1 for e in self.entries if e.origin is origin)

    def cav_fraction(self) -> float:
        if not self.entries:
            return 0.0
        n = sum(1 for e in self.entries if e.vehicle_class is VehicleClass.CAV)
        return n / len(self.entries)


# Stream tags for the per-purpose random substreams.  Headways use one
# stream per origin so that raising demand on one approach never perturbs
# the arrival pattern of another.
_STREAM_HEADWAY = 0
_STREAM_CLASSIFY = 1
_STREAM_TRAITS = 2
_STREAM_VEHICLE_NOISE = 3

_ORIGIN_INDEX = {Lane.RAMP: 0, Lane.MAINLINE_RIGHT: 1, Lane.MAINLINE_LEFT: 2}


def substream(seed: int, *key: int) -> np.random.Generator:
    """A named, reproducible PCG64 stream derived from the scenario seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def vehicle_noise_stream(seed: int, vehicle_id: int) -> np.random.Generator:
    """Per-vehicle dawdling stream; independent of spawn order."""
    return substream(seed, _STREAM_VEHICLE_NOISE, vehicle_id)


def origin_share(config: ScenarioConfig, origin: Lane) -> float:
    if origin is Lane.RAMP:
        return config.ramp_demand_fraction
    return (1.0 - config.ramp_demand_fraction) / 2.0


def generate_departures(config: ScenarioConfig) -> DepartureSchedule:
    """Draw the departure schedule for one run.

    Inter-departure headways per origin are i.i.d. exponential with mean
    3600 / (origin share x total demand).  Each entry is a CAV with
    probability ``penetration_rate``; legacy entries get a Krauss
    imperfection and a desired-speed multiplier drawn uniformly from the
    configured ranges, CAVs drive with sigma 0 and multiplier 1.
    """
    config.validate()
    raw: list[tuple[float, int, Lane]] = []
    if config.demand_vph > 0.0:
        for origin, idx in _ORIGIN_INDEX.items():
            rate_vph = origin_share(config, origin) * config.demand_vph
            if rate_vph <= 0.0:
                continue
            mean_headway = 3600.0 / rate_vph
            rng = substream(config.seed, _STREAM_HEADWAY, idx)
            t = rng.exponential(mean_headway)
            while t < config.duration:
                raw.append((t, idx, origin))
                t += rng.exponential(mean_headway)
    raw.sort(key=lambda item: (item[0], item[1]))

    classify = substream(config.seed, _STREAM_CLASSIFY)
    traits = substream(config.seed, _STREAM_TRAITS)
    sig_lo, sig_hi = config.driver_sigma_range
    mul_lo, mul_hi = config.desired_speed_multiplier_range
    entries = []
    for t, _, origin in raw:
        is_cav = classify.random() < config.penetration_rate
        if is_cav:
            entries.append(
                DepartureEntry(t, origin, VehicleClass.CAV, 0.0, 1.0)
            )
        else:
            sigma = traits.uniform(sig_lo, sig_hi)
            mult = traits.uniform(mul_lo, mul_hi)
            entries.append(
                DepartureEntry(t, origin, VehicleClass.LEGACY, sigma, mult)
            )
    return DepartureSchedule(tuple(entries))


def build_network(config: ScenarioConfig) -> NetworkGeometry:
    """Geometry for the run; Table-style defaults unless overridden."""
    geometry = config.network
    geometry.validate()
    return geometry


# --- scenario file parsing -------------------------------------------------

_GROUP_FIELDS = {
    "controller": ControllerParams,
    "game": GameParams,
    "krauss": KraussParams,
    "conflict": ConflictParams,
    "merge": MergeParams,
    "fuel": FuelParams,
    "network": NetworkGeometry,
}

_PAIR_KEYS = {"accel_bounds", "driver_sigma_range", "desired_speed_multiplier_range"}
_INT_KEYS = {"seed", "network.mainline_lane_count"}
_BOOL_KEYS = {"game.eq3_literal_sign"}


def _known_keys() -> set[str]:
    keys = set()
    for f in fields(ScenarioConfig):
        if f.name in _GROUP_FIELDS:
            continue
        keys.add(f.name)
    for group, cls in _GROUP_FIELDS.items():
        for f in fields(cls):
            keys.add(f"{group}.{f.name}")
    return keys


_KNOWN_KEYS = _known_keys()


def _parse_pair(key: str, text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise InvariantViolation(key, "expected two comma-separated numbers")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise InvariantViolation(key, f"not a number pair: {text!r}") from None


def _parse_value(key: str, text: str):
    if key in _PAIR_KEYS:
        return _parse_pair(key, text)
    if key in _BOOL_KEYS:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise InvariantViolation(key, f"not a boolean: {text!r}")
    try:
        if key in _INT_KEYS:
            return int(text, 0)
        return float(text)
    except ValueError:
        raise InvariantViolation(key, f"not a number: {text!r}") from None


def parse_scenario(config_text: str) -> ScenarioConfig:
    """Parse ``key = value`` scenario text into a validated ScenarioConfig."""
    top: dict[str, object] = {}
    grouped: dict[str, dict[str, object]] = {name: {} for name in _GROUP_FIELDS}
    for line_no, raw_line in enumerate(config_text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedLine(line_no, raw_line.rstrip())
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if not key or not value_text:
            raise MalformedLine(line_no, raw_line.rstrip())
        if key not in _KNOWN_KEYS:
            raise UnknownKey(key, line_no)
        value = _parse_value(key, value_text)
        if "." in key:
            group, _, name = key.partition(".")
            grouped[group][name] = value
        else:
            top[key] = value

    config = ScenarioConfig(**top)  # type: ignore[arg-type]
    for group, overrides in grouped.items():
        if overrides:
            sub = replace(getattr(config, group), **overrides)
            config = replace(config, **{group: sub})
    # A run-level time gap defaults to the shared desired time headway unless
    # the controller group pins its own value.
    if "time_gap" not in grouped["controller"]:
        config = replace(
            config,
            controller=replace(
                config.controller, time_gap=config.desired_time_headway
            ),
        )
    config.validate()
    return config


def format_scenario(config: ScenarioConfig) -> str:
    """Render a config back to the flat file format (defaults included)."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if f.name in _GROUP_FIELDS:
            for sub in fields(value):
                sub_val = getattr(value, sub.name)
                lines.append(f"{f.name}.{sub.name} = {_fmt(sub_val)}")
        else:
            lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)  # shortest exact form, round-trips bit-for-bit
    return str(value)
