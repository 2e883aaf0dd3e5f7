import pytest

from mergesim.conflict import (
    pair_game_kind,
    predict_conflict,
    project_to_merge_frame,
    projected_gap,
)
from mergesim.dynamics import Lane, VehicleClass, VehicleState
from mergesim.errors import WrongLane
from mergesim.game import GameKind
from mergesim.scenario import ScenarioConfig, build_network

GEO = build_network(ScenarioConfig())


def vehicle(vid, lane, position, speed, cls=VehicleClass.CAV):
    return VehicleState(
        id=vid, vehicle_class=cls, lane=lane, position=position, speed=speed
    )


class TestProjection:
    def test_ramp_spawn_distance(self):
        proj = project_to_merge_frame(vehicle(1, Lane.RAMP, 0.0, 15.0), GEO)
        assert proj.distance_to_merge == 250.0
        assert proj.projected_position == -250.0

    def test_at_merge_point(self):
        proj = project_to_merge_frame(vehicle(1, Lane.RAMP, 250.0, 18.0), GEO)
        assert proj.distance_to_merge == 0.0
        assert proj.eta == 0.0

    def test_eta_arithmetic(self):
        proj = project_to_merge_frame(
            vehicle(1, Lane.MAINLINE_RIGHT, 180.0, 20.0), GEO
        )
        assert proj.distance_to_merge == pytest.approx(100.0)
        assert proj.eta == pytest.approx(5.0)

    def test_speed_floor_avoids_singularity(self):
        proj = project_to_merge_frame(vehicle(1, Lane.RAMP, 100.0, 0.0), GEO)
        assert proj.eta == pytest.approx(150.0 / 0.1)

    def test_left_lane_rejected(self):
        with pytest.raises(WrongLane):
            project_to_merge_frame(vehicle(1, Lane.MAINLINE_LEFT, 50.0, 20.0), GEO)

    def test_projected_gap_orientation(self):
        a = project_to_merge_frame(vehicle(1, Lane.RAMP, 240.0, 15.0), GEO)
        b = project_to_merge_frame(vehicle(2, Lane.MAINLINE_RIGHT, 250.0, 20.0), GEO)
        # a at -10, b at -30: a leads, so a's length is subtracted
        assert projected_gap(a, 5.0, b, 4.0) == pytest.approx(20.0 - 5.0)
        assert projected_gap(b, 4.0, a, 5.0) == pytest.approx(20.0 - 5.0)


class TestGameKind:
    def test_two_cavs_cooperate(self):
        assert pair_game_kind(VehicleClass.CAV, VehicleClass.CAV) is GameKind.COOPERATIVE

    def test_mixed_is_noncooperative(self):
        assert (
            pair_game_kind(VehicleClass.CAV, VehicleClass.LEGACY)
            is GameKind.NONCOOPERATIVE
        )
        assert (
            pair_game_kind(VehicleClass.LEGACY, VehicleClass.CAV)
            is GameKind.NONCOOPERATIVE
        )

    def test_two_legacy_no_game(self):
        assert (
            pair_game_kind(VehicleClass.LEGACY, VehicleClass.LEGACY) is GameKind.NO_GAME
        )


def candidates_at_etas(etas):
    out = []
    for i, eta in enumerate(etas, start=10):
        speed = 20.0
        pos = GEO.merge_point(Lane.MAINLINE_RIGHT) - eta * speed
        state = vehicle(i, Lane.MAINLINE_RIGHT, pos, speed)
        out.append((project_to_merge_frame(state, GEO), state))
    return out


def ramp_at_eta(eta, speed=15.0):
    pos = GEO.merge_point(Lane.RAMP) - eta * speed
    state = vehicle(1, Lane.RAMP, pos, speed)
    return project_to_merge_frame(state, GEO), state


class TestPredictConflict:
    def test_empty_candidates(self):
        proj, state = ramp_at_eta(10.0)
        assert predict_conflict(proj, state, [], GEO, 15.0, 2.0) is None

    def test_picks_nearest_eta(self):
        proj, state = ramp_at_eta(10.0)
        pair = predict_conflict(
            proj, state, candidates_at_etas([6.0, 9.5, 14.0]), GEO, 15.0, 2.0
        )
        assert pair is not None
        assert pair.mainline_vehicle_id == 11  # the 9.5 s candidate

    def test_outside_window_is_none(self):
        proj, state = ramp_at_eta(10.0)
        assert (
            predict_conflict(proj, state, candidates_at_etas([13.0]), GEO, 15.0, 2.0)
            is None
        )

    def test_beyond_horizon_is_none(self):
        proj, state = ramp_at_eta(16.0)
        assert (
            predict_conflict(proj, state, candidates_at_etas([16.5]), GEO, 20.0, 2.0)
            is not None
        )
        assert (
            predict_conflict(proj, state, candidates_at_etas([16.5]), GEO, 15.0, 2.0)
            is None
        )

    def test_remaining_distance_to_zone_end(self):
        proj, state = ramp_at_eta(2.0, speed=15.0)  # 30 m before the merge point
        pair = predict_conflict(proj, state, candidates_at_etas([2.5]), GEO, 15.0, 2.0)
        assert pair is not None
        assert pair.d_end == pytest.approx(30.0 + GEO.merge_zone_length)

    def test_kind_follows_classes(self):
        proj, state = ramp_at_eta(10.0)
        cands = candidates_at_etas([9.8])
        pair = predict_conflict(proj, state, cands, GEO, 15.0, 2.0)
        assert pair.game_kind is GameKind.COOPERATIVE
        legacy_state = cands[0][1]
        legacy_state.vehicle_class = VehicleClass.LEGACY
        pair = predict_conflict(proj, state, cands, GEO, 15.0, 2.0)
        assert pair.game_kind is GameKind.NONCOOPERATIVE
