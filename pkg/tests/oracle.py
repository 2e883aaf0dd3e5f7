"""Independent straight-line re-implementations of the cost pipeline.

Everything here is written directly from the math, with no imports from the
package's game module, so tests can compare the production code against a
second, separately derived path.
"""

import math

SPEED_FLOOR = 0.1


def oracle_ttc(gap, v_f, v_p, a_f, a_p, dt):
    gap_pred = gap + (v_p - v_f) * dt + 0.5 * (a_p - a_f) * dt * dt
    v_f_pred = v_f + a_f * dt
    if v_f_pred < 0.0:
        v_f_pred = 0.0
    v_p_pred = v_p + a_p * dt
    if v_p_pred < 0.0:
        v_p_pred = 0.0
    if v_f_pred <= v_p_pred:
        return None
    ttc = gap_pred / (v_f_pred - v_p_pred)
    return ttc if ttc > 0.0 else 0.0


def oracle_risk1(gap, v_e, v_c, a_e, a_c, dt, t_h):
    gap_pred = gap + (v_c - v_e) * dt + 0.5 * (a_c - a_e) * dt * dt
    if gap_pred < 0.0:
        gap_pred = 0.0
    v_e_pred = max(0.0, v_e + a_e * dt)
    v_c_pred = max(0.0, v_c + a_c * dt)
    h = gap_pred / max(v_e_pred, SPEED_FLOOR)
    if v_e_pred > v_c_pred:
        ttc = oracle_ttc(gap, v_e, v_c, a_e, a_c, dt)
        ttc_term = 0.0 if ttc is None else 1.0 - math.tanh(ttc / t_h)
        return (ttc_term + (1.0 - math.tanh(h / t_h))) / 2.0
    return (1.0 - math.tanh(h / t_h)) / 2.0


def oracle_risk_d2e(d_end, v_ramp, t_h):
    h_ending = d_end / max(v_ramp, SPEED_FLOOR)
    return (1.0 - math.tanh(h_ending / t_h)) / 2.0


def oracle_mobility(delta_v, v_e):
    return (1.0 - math.tanh(delta_v / max(v_e, SPEED_FLOOR))) / 2.0


def oracle_cost_mainline(risk1, mobility):
    return risk1 + mobility


def oracle_cost_ramp(risk1, risk_d2e, mobility):
    return (risk1 + risk_d2e) / 2.0 + mobility


def oracle_noncoop_argmin(cost_lead, cost_follow):
    """Brute-force over the feasible diagonal of the 2x2 table."""
    table = {"leader": cost_lead, "follower": cost_follow}
    best = min(sorted(table), key=lambda k: (table[k], k != "follower"))
    # tie resolves to follower: min over (cost, not-follower) pairs
    if table["leader"] == table["follower"]:
        return "follower"
    return best


def oracle_coop_argmin(ego_lead, ego_follow, comp_lead, comp_follow, inf=1e6):
    cells = {
        ("leader", "leader"): inf,
        ("leader", "follower"): ego_lead + comp_follow,
        ("follower", "leader"): ego_follow + comp_lead,
        ("follower", "follower"): inf,
    }
    best_cost = min(cells.values())
    winners = [k for k, v in cells.items() if v == best_cost]
    if len(winners) == 1:
        return winners[0]
    return ("follower", "leader")  # tie: the ego (ramp) player yields


def oracle_consensus(ego_pos, ego_speed, tgt_pos, tgt_speed, tgt_len,
                     adjacency, gain, weight, tau, time_gap, a_min, a_max):
    raw = -adjacency * gain * (
        (ego_pos - tgt_pos + tgt_len + ego_speed * (time_gap + tau))
        + weight * (ego_speed - tgt_speed)
    )
    return min(max(raw, a_min), a_max)


def oracle_free_flow(speed, desired, gain, a_min, a_max):
    return min(max(gain * (desired - speed), a_min), a_max)
