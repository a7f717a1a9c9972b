import math
import random

import pytest

from hexair.kinematics import (CCW, CW, AircraftState, FollowPath, GuidanceError,
                               HoldHeading, KinematicLimits, PathChain,
                               TurnToHeading, border_midpoint, build_path,
                               direct_to, integrate, link_heading, plan_arrival,
                               plan_hold, plan_leg, wrap_angle)
from hexair.lattice import AirspaceConfig, centroid, locate, point_in_cell

CFG = AirspaceConfig()
LIM = KinematicLimits()
T_CELL = CFG.centroid_spacing_m / LIM.speed_mps
DT = 0.5


def fresh(x=0.0, y=0.0, heading=0.0):
    return AircraftState(x, y, heading, LIM.speed_mps)


def test_limits_defaults():
    assert LIM.speed_mps == pytest.approx(44.4)
    assert LIM.turn_rate_radps == pytest.approx(math.radians(6.5))
    assert LIM.turn_radius_m == pytest.approx(391.4, abs=0.1)
    # a full reversal fits inside a cell with margin
    assert 2 * LIM.turn_radius_m < CFG.apothem_m


def test_integrate_straight():
    st = fresh()
    st = integrate(st, HoldHeading(), LIM, 2.0)
    assert st.x_m == pytest.approx(88.8)
    assert st.y_m == pytest.approx(0.0)
    assert st.flown_distance_m == pytest.approx(88.8)


def test_integrate_turn_rate():
    st = fresh()
    st = integrate(st, TurnToHeading(math.pi / 2, CCW), LIM, 1.0)
    assert math.degrees(st.heading_rad) == pytest.approx(6.5)
    # full circle takes 360 / 6.5 seconds
    assert 2 * math.pi / LIM.turn_rate_radps == pytest.approx(55.38, abs=0.01)


def test_turn_stops_at_target_then_flies_straight():
    st = fresh()
    cmd = TurnToHeading(math.radians(10.0), CCW)
    for _ in range(10):
        st = integrate(st, cmd, LIM, DT)
    assert st.heading_rad == pytest.approx(math.radians(10.0))
    before = st.heading_rad
    st = integrate(st, cmd, LIM, DT)
    assert st.heading_rad == before


def test_turn_rate_bound_and_speed_constancy_random_commands():
    rng = random.Random(99)
    st = fresh()
    cmd = HoldHeading()
    for step in range(400):
        if step % 7 == 0:
            kind = rng.randrange(3)
            if kind == 0:
                cmd = HoldHeading()
            else:
                cmd = TurnToHeading(rng.uniform(-math.pi, math.pi),
                                    CCW if kind == 1 else CW)
        prev = st
        st = integrate(st, cmd, LIM, DT)
        dh = abs(wrap_angle(st.heading_rad - prev.heading_rad))
        assert dh / DT <= LIM.turn_rate_radps + 1e-9
        dist = math.hypot(st.x_m - prev.x_m, st.y_m - prev.y_m)
        assert dist / DT == pytest.approx(LIM.speed_mps, rel=1e-3)


def in_cell_time(leg, entry_heading, start_xy):
    """Simulate a leg and measure time spent inside its from_cell via locate()."""
    chain = PathChain((start_xy[0], start_xy[1], entry_heading))
    chain.append(leg.path)
    st = AircraftState(start_xy[0], start_xy[1], entry_heading, LIM.speed_mps)
    cmd = FollowPath(chain, 0.0)
    t_inside = 0.0
    t = 0.0
    while st.flown_distance_m < chain.length - 1e-9:
        st = integrate(st, cmd, LIM, DT)
        t += DT
        if locate(st.position, CFG) == leg.from_cell:
            t_inside += DT
    return t, t_inside


@pytest.mark.parametrize("to_cell", [4, 3, 2, 5, 6])
def test_transit_leg_occupation_and_containment(to_cell):
    # entering the centre cell from cell 1 (heading south), exiting toward to_cell
    entry = border_midpoint(1, 0, CFG)
    h = link_heading(1, 0, CFG)
    leg = plan_leg(entry, h, 0, to_cell, CFG, LIM)
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-6)
    total, inside = in_cell_time(leg, h, entry)
    assert total == pytest.approx(T_CELL, abs=DT)
    assert inside == pytest.approx(T_CELL, abs=2.0)
    # containment: sampled interior points stay in the from-cell
    n = int(leg.path.length / 20.0)
    for k in range(1, n):
        x, y, _ = leg.path.pose_at(leg.path.length * k / n)
        assert point_in_cell((x, y), 0, CFG, slack_m=1.0)
    # exit pose: border midpoint toward to_cell, heading along the link
    ex, ey, eh = leg.path.end_pose
    bx, by = border_midpoint(0, to_cell, CFG)
    assert math.hypot(ex - bx, ey - by) < 1e-6
    assert abs(wrap_angle(eh - link_heading(0, to_cell, CFG))) < 1e-9


def test_straight_through_leg_is_exact():
    entry = border_midpoint(1, 0, CFG)
    h = link_heading(1, 0, CFG)
    leg = plan_leg(entry, h, 0, 4, CFG, LIM)  # cell 4 is diametrically opposite cell 1
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-9)
    assert len(leg.path.segments) == 1  # pure straight


def test_holding_orbit_contained_and_one_cell_time():
    cx, cy = centroid(0, CFG)
    leg = plan_hold((cx, cy, 0.7), 0, CFG, LIM)
    assert leg.kind == "hold_orbit"
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-6)
    n = 200
    for k in range(n + 1):
        x, y, _ = leg.path.pose_at(leg.path.length * k / n)
        assert locate((x, y), CFG) == 0
    x, y, h = leg.path.end_pose
    assert math.hypot(x - cx, y - cy) < 1e-6
    assert abs(wrap_angle(h - 0.7)) < 1e-9


def test_hold_from_border_reaches_centroid():
    entry = border_midpoint(8, 7, CFG)
    h = link_heading(8, 7, CFG)
    leg = plan_hold((entry[0], entry[1], h), 7, CFG, LIM)
    assert leg.kind == "hold_entry"
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-6)
    ex, ey, eh = leg.path.end_pose
    cx, cy = centroid(7, CFG)
    assert math.hypot(ex - cx, ey - cy) < 1e-6
    assert abs(wrap_angle(eh - h)) < 1e-9
    n = int(leg.path.length / 20.0)
    for k in range(1, n + 1):
        x, y, _ = leg.path.pose_at(leg.path.length * k / n)
        assert point_in_cell((x, y), 7, CFG, slack_m=1.0)


@pytest.mark.parametrize("hdg_deg", [0.0, 14.0, -52.0, 121.0, 180.0, -121.0])
def test_centroid_exit_leg_any_heading(hdg_deg):
    cx, cy = centroid(7, CFG)
    h = math.radians(hdg_deg)
    leg = plan_leg((cx, cy), h, 7, 8, CFG, LIM)
    assert leg.kind == "centroid_exit"
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-6)
    n = int(leg.path.length / 20.0)
    for k in range(1, n):
        x, y, _ = leg.path.pose_at(leg.path.length * k / n)
        assert point_in_cell((x, y), 7, CFG, slack_m=1.0)


def test_reversal_leg_exits_through_entry_border():
    # enter cell 0 from cell 1, planned next cell is cell 1 again
    entry = border_midpoint(1, 0, CFG)
    h = link_heading(1, 0, CFG)
    leg = plan_leg(entry, h, 0, 1, CFG, LIM)
    assert leg.path.length == pytest.approx(CFG.centroid_spacing_m, abs=1e-6)
    ex, ey, eh = leg.path.end_pose
    bx, by = border_midpoint(0, 1, CFG)
    assert math.hypot(ex - bx, ey - by) < 1e-6
    assert abs(wrap_angle(eh - link_heading(0, 1, CFG))) < 1e-9


def test_plan_arrival_straight_to_centroid():
    entry = border_midpoint(1, 0, CFG)
    h = link_heading(1, 0, CFG)
    leg = plan_arrival((entry[0], entry[1], h), 0, CFG, LIM)
    assert leg.path.length == pytest.approx(CFG.apothem_m, abs=1e-9)
    ex, ey, _ = leg.path.end_pose
    assert math.hypot(ex, ey) < 1e-6


def test_direct_to_senses():
    st = fresh()
    assert isinstance(direct_to(st, (10000.0, 0.0)), HoldHeading)
    cmd = direct_to(st, (0.0, 10000.0))
    assert isinstance(cmd, TurnToHeading) and cmd.sense == CCW
    assert cmd.target_rad == pytest.approx(math.pi / 2)
    # target bearing 181 degrees: shorter turn is 179 degrees clockwise
    b = math.radians(181.0)
    cmd = direct_to(st, (1e4 * math.cos(b), 1e4 * math.sin(b)))
    assert isinstance(cmd, TurnToHeading) and cmd.sense == CW
    assert isinstance(direct_to(st, (0.0, 0.0)), HoldHeading)


def test_follow_path_tracks_chain_exactly():
    entry = border_midpoint(1, 0, CFG)
    h = link_heading(1, 0, CFG)
    chain = PathChain((entry[0], entry[1], h))
    chain.append(plan_leg(entry, h, 0, 3, CFG, LIM).path)
    st = AircraftState(entry[0], entry[1], h, LIM.speed_mps)
    cmd = FollowPath(chain, 0.0)
    while st.flown_distance_m < chain.length - LIM.speed_mps * DT:
        st = integrate(st, cmd, LIM, DT)
        px, py, _ = chain.pose_at(st.flown_distance_m)
        assert math.hypot(st.x_m - px, st.y_m - py) < 1e-6


def test_infeasible_hold_circle_raises():
    tight = KinematicLimits(speed_mps=44.4, turn_rate_radps=math.radians(3.0))
    cx, cy = centroid(0, CFG)
    with pytest.raises(GuidanceError):
        plan_hold((cx, cy, 0.0), 0, CFG, tight)
