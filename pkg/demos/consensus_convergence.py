"""Two-vehicle closed loop under the consensus acceleration law.

A follower starts 20 m farther back than its equilibrium spacing and 5 m/s
slower than the leader; the script prints how the spacing and speed errors
decay over time.
"""

from mergesim.dynamics import ControllerParams, TargetSnapshot, consensus_accel


class Point:
    def __init__(self, position, speed):
        self.position = position
        self.speed = speed


def main():
    params = ControllerParams()
    dt = 0.02
    leader_speed = 20.0
    follower = Point(0.0, leader_speed - 5.0)
    leader_pos = 5.0 + follower.speed * params.time_gap + 20.0

    print(f"gains: spacing {params.spacing_gain}/s^2, speed weight {params.speed_weight} s")
    print(f"{'t [s]':>6} {'gap err [m]':>12} {'speed err [m/s]':>16} {'accel [m/s2]':>13}")
    t = 0.0
    while t < 40.0:
        target = TargetSnapshot(1, leader_pos, leader_speed, 5.0)
        a = consensus_accel(follower, target, params)
        if abs(t % 2.0) < dt / 2:
            spacing = leader_pos - follower.position
            gap_err = spacing - (5.0 + follower.speed * params.time_gap)
            print(f"{t:6.1f} {gap_err:12.3f} {follower.speed - leader_speed:16.3f} {a:13.3f}")
        follower.speed = max(0.0, follower.speed + a * dt)
        follower.position += follower.speed * dt
        leader_pos += leader_speed * dt
        t += dt


if __name__ == "__main__":
    main()
