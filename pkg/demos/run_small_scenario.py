"""Run a short mixed-traffic scenario and print the per-group outcome."""

from dataclasses import replace

from mergesim.engine import run
from mergesim.metrics import Group, average_speed, fuel_per_mile
from mergesim.scenario import ScenarioConfig


def main():
    config = replace(
        ScenarioConfig(),
        demand_vph=1800.0,
        penetration_rate=0.5,
        duration=240.0,
        seed=42,
    )
    log = run(config)
    print(
        f"{log.spawned} vehicles spawned, {log.completed} completed, "
        f"cleared at t={log.end_time:.1f} s, "
        f"min same-lane gap {log.min_same_lane_gap:.2f} m"
    )
    for group in (Group.RAMP, Group.MAINLINE):
        speed = average_speed(log.trips, group)
        fuel = fuel_per_mile(log.trips, group)
        print(
            f"  {group.value:9s} avg speed {speed:5.2f} m/s, "
            f"fuel {fuel:6.1f} g/mile"
        )


if __name__ == "__main__":
    main()
