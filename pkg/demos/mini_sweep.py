"""A miniature demand x penetration sweep with a printed result table.

The full study grid (1400/2400/3400 vph x 0/30/70/100% over 30 min) runs
through the CLI; this demo shrinks duration and demand so it finishes in
about a minute.
"""

from dataclasses import replace

from mergesim.engine import run
from mergesim.metrics import (
    CellMetrics,
    Group,
    aggregate,
    average_speed,
    fuel_per_mile,
)
from mergesim.scenario import ScenarioConfig


def main():
    base = replace(ScenarioConfig(), duration=300.0, seed=5)
    cells = []
    for demand in (1200.0, 2000.0):
        for pen in (0.0, 0.5, 1.0):
            config = replace(base, demand_vph=demand, penetration_rate=pen)
            log = run(config)
            for group in (Group.RAMP, Group.MAINLINE):
                cells.append(
                    CellMetrics(
                        group=group,
                        demand_vph=demand,
                        penetration=pen,
                        seed=base.seed,
                        avg_speed=average_speed(log.trips, group),
                        fuel_g_per_mile=fuel_per_mile(log.trips, group),
                    )
                )
            print(f"ran demand={demand:g} penetration={pen:.0%}")

    print(f"\n{'group':9s} {'vph':>6} {'pen':>5} {'speed':>7} {'impr%':>7} "
          f"{'g/mile':>8} {'red%':>6}")
    for row in aggregate(cells):
        print(
            f"{row.group.value:9s} {row.demand_vph:6.0f} {row.penetration:5.0%} "
            f"{row.avg_speed:7.2f} {row.improvement_pct:7.2f} "
            f"{row.fuel_g_per_mile:8.1f} {row.reduction_pct:6.2f}"
        )


if __name__ == "__main__":
    main()
