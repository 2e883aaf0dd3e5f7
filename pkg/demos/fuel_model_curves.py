"""Tabulate the fuel surrogate: rate vs speed, and the stop-and-go penalty."""

from mergesim.metrics import FuelParams, fuel_rate, trip_fuel, METERS_PER_MILE


def main():
    params = FuelParams()
    print(f"{'speed [m/s]':>12} {'rate [g/s]':>11} {'cruise [g/mile]':>16}")
    for v in (0.0, 5.0, 10.0, 15.0, 20.0, 25.0):
        rate = fuel_rate(v, 0.0, params)
        per_mile = rate * METERS_PER_MILE / v if v > 0 else float("inf")
        print(f"{v:12.1f} {rate:11.4f} {per_mile:16.1f}")

    # one stop-and-go cycle versus a steady cruise of equal distance
    dt = 0.02
    speeds, accels = [], []
    v = 0.0
    for _ in range(int(20.0 / dt)):
        a = 2.0 if v < 15.0 else 0.0
        speeds.append(v)
        accels.append(a)
        v = max(0.0, v + a * dt)
    while v > 0.0:
        speeds.append(v)
        accels.append(-4.0)
        v = max(0.0, v - 4.0 * dt)
    distance = sum(s * dt for s in speeds)
    _, stop_go = trip_fuel(speeds, accels, dt, params, distance=distance)
    n = int(round(distance / 15.0 / dt))
    _, cruise = trip_fuel([15.0] * n, [0.0] * n, dt, params)
    print(f"\nover {distance:.0f} m: stop-and-go {stop_go:.1f} g/mile "
          f"vs steady cruise {cruise:.1f} g/mile")


if __name__ == "__main__":
    main()
