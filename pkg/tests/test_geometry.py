import pytest

from crossflow.geometry import (LEFT, RIGHT, SCENARIOS, THROUGH,
                                build_scenario, movement_between)


def test_scenario_table():
    assert set(SCENARIOS) == {"a", "b", "c"}
    for tag, (lanes, phases) in {"a": (2, 2), "b": (3, 4), "c": (4, 4)}.items():
        inter = build_scenario(tag)
        assert inter.lanes_per_approach == lanes
        assert inter.n_incoming == 4 * lanes
        assert inter.n_phases == phases
        inter.validate()


def test_unknown_scenario():
    with pytest.raises(ValueError):
        build_scenario("z")


def test_movement_offsets():
    # approaches are N=0, E=1, S=2, W=3; a northbound-entry vehicle heading
    # south turns left onto the east leg
    assert movement_between(0, 1) == LEFT
    assert movement_between(0, 2) == THROUGH
    assert movement_between(0, 3) == RIGHT
    assert movement_between(3, 0) == LEFT
    with pytest.raises(ValueError):
        movement_between(0, 0)


def test_lane_movement_layout():
    inter = build_scenario("a")
    assert inter.lane_movements == [(THROUGH, RIGHT), (LEFT,)]
    assert build_scenario("b").lane_movements == \
        [(THROUGH, RIGHT), (THROUGH,), (LEFT,)]
    assert build_scenario("c").lane_movements == \
        [(THROUGH, RIGHT), (THROUGH,), (LEFT,), (LEFT,)]


def test_permissive_lefts_only_in_scenario_a():
    for tag, expected in (("a", True), ("b", False), ("c", False)):
        inter = build_scenario(tag)
        lefts = [c for c in inter.connections if c.movement == LEFT]
        assert lefts
        assert all(c.permissive == expected for c in lefts)
        assert not any(c.permissive for c in inter.connections
                       if c.movement != LEFT)


def test_connections_map_to_same_lane_index():
    for tag in SCENARIOS:
        for c in build_scenario(tag).connections:
            assert movement_between(c.src, c.dst) == c.movement


def test_phase_rows_scenario_a():
    inter = build_scenario("a")
    # N lanes are rows 0-1, E 2-3, S 4-5, W 6-7
    assert inter.phase_incoming_rows(0) == (0, 1, 4, 5)
    assert inter.phase_incoming_rows(1) == (2, 3, 6, 7)


def test_phase_structure_scenario_b():
    inter = build_scenario("b")
    moves = [{c.movement for c in p.connections} for p in inter.phases]
    assert moves == [{THROUGH, RIGHT}, {LEFT}, {THROUGH, RIGHT}, {LEFT}]
    srcs = [{c.src for c in p.connections} for p in inter.phases]
    assert srcs == [{0, 2}, {0, 2}, {1, 3}, {1, 3}]


def test_every_lane_served_exactly_by_some_phase():
    for tag in SCENARIOS:
        inter = build_scenario(tag)
        covered = set()
        for p in range(inter.n_phases):
            covered.update(inter.phase_incoming_rows(p))
        assert covered == set(range(inter.n_incoming))


def test_lane_labels():
    inter = build_scenario("a")
    assert inter.lane_row(0, 0) == 0
    assert inter.lane_row(2, 1) == 5
    assert inter.lane_label(0) == "N-in-0"
    assert inter.lane_label(5) == "S-in-1"
    assert inter.lane_label(7, incoming=False) == "W-out-1"


def test_row_connections():
    inter = build_scenario("a")
    cons = inter.row_connections(0)
    assert {c.movement for c in cons} == {THROUGH, RIGHT}
    assert all(c.src == 0 and c.lane == 0 for c in cons)


def test_defaults():
    inter = build_scenario("b")
    assert inter.approach_length == 300.0
    assert inter.v_max == 13.89
    custom = build_scenario("a", approach_length=200.0, v_max=14.0)
    assert custom.approach_length == 200.0
    assert custom.v_max == 14.0
