"""Walk through one cooperative merging game step by step.

Two connected vehicles approach the merge point with nearly equal arrival
times; the script prints every cost component of the four (player, action)
evaluations and the resolved roles.
"""

from mergesim.dynamics import ControllerParams
from mergesim.game import (
    GameParams,
    PlayerContext,
    Side,
    resolve_game,
)


def player(side, vehicle_id, distance_to_merge, speed):
    return PlayerContext(
        vehicle_id=vehicle_id,
        side=side,
        is_cav=True,
        position=-distance_to_merge,
        speed=speed,
        accel=0.0,
        length=5.0,
        effective_length=10.0,
        desired_speed=20.0,
        predecessor=None,
    )


def main():
    ramp = player(Side.RAMP, 1, distance_to_merge=150.0, speed=15.0)
    mainline = player(Side.MAINLINE, 2, distance_to_merge=160.0, speed=20.0)
    d_end = 150.0 + 89.0

    res = resolve_game(ramp, mainline, d_end, ControllerParams(), GameParams())
    print("evaluations (per player and action):")
    for (side, role), ev in sorted(
        res.evaluations.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        ttc = "none" if ev.predicted_ttc is None else f"{ev.predicted_ttc:6.2f} s"
        d2e = "   -" if ev.risk_d2e is None else f"{ev.risk_d2e:.4f}"
        print(
            f"  {side.value:8s} {role.value:8s} accel {ev.candidate_accel:+6.2f}"
            f"  ttc {ttc:>9s}  headway {ev.predicted_headway:6.2f} s"
            f"  risk {ev.risk1:.4f}  d2e {d2e}  mobility {ev.mobility:.4f}"
            f"  total {ev.total_cost:.4f}"
        )
    out = res.outcome
    print(f"\nresolved as {out.solved_as.value}:")
    print(f"  ramp vehicle     -> {out.ramp_role.value} (target {out.ramp_target_id})")
    print(f"  mainline vehicle -> {out.mainline_role.value} (target {out.mainline_target_id})")


if __name__ == "__main__":
    main()
