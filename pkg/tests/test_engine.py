import math
from collections import defaultdict

import pytest

from hexair.daa import DaaConfig, dthr_from_nmi
from hexair.engine import (EVENT_ASTM, EVENT_EXCURSION, EVENT_HMD, EVENT_TIMEOUT,
                           EngineConfig, _Sim, classify_events, run_scenario)
from hexair.lattice import AirspaceConfig, centroid, hex_distance
from hexair.scenario import Mission, ScenarioConfig, unrank_recovery, unrank_unperturbed
from hexair.strategic import AllocationProblem, solve

CFG = AirspaceConfig()
T = 4000.0 / 44.4


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(mode="bogus")
    with pytest.raises(ValueError):
        EngineConfig(dt_metric_s=1.7)


def test_classify_events_thresholds():
    ec = EngineConfig()
    assert classify_events([(0.0, 0.0)], 1200.0, ec) == {EVENT_HMD}
    # 1725 ft = 525.78 m: inside both thresholds
    assert classify_events([(0.0, 0.0)], 525.78, ec) == {EVENT_HMD, EVENT_ASTM}
    assert classify_events([(0.0, 0.0)], 1219.2, ec) == set()
    assert classify_events([(0.0, 9000.0)], None, ec) == set()
    assert classify_events([(0.0, 10401.0)], None, ec) == {EVENT_EXCURSION}


def test_strategic_scenario_clean_and_exactly_timed():
    sc = unrank_unperturbed(77777, CFG)
    ec = EngineConfig(mode="strategic_u")
    res = run_scenario(sc, ec)
    assert res.events == []
    assert res.anomalies == []
    problem = AllocationProblem(
        CFG, tuple((i, m.origin, m.destination) for i, m in enumerate(sc.missions)))
    plan = solve(problem)
    for a in res.aircraft:
        legs = len(plan.paths[a.aircraft]) - 1
        assert a.finished
        assert a.flight_time_s == pytest.approx(legs * T, rel=0.02)
        assert a.flown_distance_m == pytest.approx(legs * 4000.0, rel=0.02)


def test_strategic_cpas_near_cell_borders():
    sc = unrank_unperturbed(3141, CFG)
    res = run_scenario(sc, EngineConfig(mode="strategic_u"))
    for a in res.aircraft:
        assert a.cpa is not None
        x, y = a.cpa.own_position
        best = min(math.hypot(x - centroid(c, CFG)[0], y - centroid(c, CFG)[1])
                   for c in range(CFG.cell_count))
        # at the closest approach the aircraft sits out toward a border, not
        # at a centroid (border midpoints are 2000 m out)
        assert best > 1000.0


def test_determinism_bit_identical():
    sc = unrank_unperturbed(4242, CFG)
    for mode in ("strategic_u", "daa_u", "collab_u"):
        t1, t2 = [], []
        r1 = run_scenario(sc, EngineConfig(mode=mode), t1)
        r2 = run_scenario(sc, EngineConfig(mode=mode), t2)
        assert r1 == r2
        assert t1 == t2
    rsc = unrank_recovery(999, CFG)
    for mode in ("daa_rec", "collab_rec"):
        r1 = run_scenario(rsc, EngineConfig(mode=mode))
        r2 = run_scenario(rsc, EngineConfig(mode=mode))
        assert r1 == r2


def test_two_aircraft_head_on_daa_keeps_separation():
    for nmi in (0.66, 1.00):
        dthr = dthr_from_nmi(nmi)
        ec = EngineConfig(mode="daa_u", daa=DaaConfig(dthr_m=dthr))
        sc = ScenarioConfig(0, (Mission(7, 13), Mission(13, 7)), None)
        res = run_scenario(sc, ec)
        assert res.actual_hmd_m >= dthr
        assert all(a.finished for a in res.aircraft)


def test_timeout_event_and_time_span():
    sc = unrank_unperturbed(50, CFG)
    trace = []
    ec = EngineConfig(mode="daa_u", timeout_s=100.0)
    res = run_scenario(sc, ec, trace)
    assert EVENT_TIMEOUT in res.events
    assert any(not a.finished for a in res.aircraft)
    times = [row[1] for row in trace if row[0] == "state"]
    assert min(times) == 0.0
    assert max(times) == 100.0


def test_excursion_threshold_via_engine():
    # corner origins sit 8000 m out; a tightened excursion radius must flag them
    sc = unrank_unperturbed(50, CFG)
    ec = EngineConfig(mode="daa_u", excursion_radius_m=7000.0)
    res = run_scenario(sc, ec)
    assert EVENT_EXCURSION in res.events


def test_arrival_removes_aircraft_from_metrics():
    sc = unrank_unperturbed(77777, CFG)
    ec = EngineConfig(mode="strategic_u")
    res = run_scenario(sc, ec)
    for a in res.aircraft:
        assert a.cpa.t_s <= a.flight_time_s + 1e-9


def test_collab_exclusive_occupancy_and_ledger_consistency():
    sc = unrank_unperturbed(98765, CFG)
    trace = []
    sim = _Sim(sc, EngineConfig(mode="collab_u"), trace)
    res = sim.run()
    assert res.events == []
    assert res.anomalies == []
    by_time = defaultdict(list)
    for row in trace:
        if row[0] == "state" and row[7] >= 0:
            by_time[row[1]].append(row[7])
    for t, cells in by_time.items():
        assert len(cells) == len(set(cells)), f"shared cell at t={t}"
    for cell, rows in sim.ledger.by_cell.items():
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                assert not rows[i].overlaps(rows[j].t_start_s, rows[j].t_end_s)


def test_collab_u_flight_time_cadence():
    # unimpeded collaborative missions take (legs + 1/2) cell times: a full
    # window in the origin cell plus a half-window into the destination
    sc = ScenarioConfig(0, (Mission(7, 13), Mission(9, 15), Mission(11, 17),
                            Mission(13, 7)), None)
    res = run_scenario(sc, EngineConfig(mode="collab_u"))
    for a in res.aircraft:
        if not a.finished:
            continue
        slots = a.flight_time_s / T
        assert abs(slots - round(slots * 2) / 2) < 0.02


def test_collab_rec_regulars_follow_plan_until_interference():
    rsc = unrank_recovery(123456, CFG)
    res = run_scenario(rsc, EngineConfig(mode="collab_rec"))
    assert res.events == []
    assert all(a.finished for a in res.aircraft)


def test_intruder_entry_retry_when_origin_reserved():
    # the intruder's origin is a regular's destination; schedule the entry just
    # before the regular arrives so the first attempts are refused
    missions = (Mission(7, 13), Mission(8, 14), Mission(9, 15), Mission(13, 7))
    sc = ScenarioConfig(0, missions, intruder_index=3, intruder_entry_s=300.0)
    trace = []
    res = run_scenario(sc, EngineConfig(mode="collab_rec"), trace)
    intruder_rows = [row for row in trace if row[0] == "state" and row[2] == 3]
    assert intruder_rows, "intruder never entered"
    first_seen = min(row[1] for row in intruder_rows)
    assert first_seen >= 340.0  # at least one 40 s retry
    a3 = res.aircraft[3]
    assert a3.entered and a3.finished


def test_daa_rec_intruder_appears_at_entry_time():
    rsc = unrank_recovery(2024, CFG)
    trace = []
    run_scenario(rsc, EngineConfig(mode="daa_rec"), trace)
    rows = [row for row in trace if row[0] == "state" and row[2] == rsc.intruder_index]
    assert rows
    assert min(row[1] for row in rows) == pytest.approx(30.0, abs=2.0)


def test_daa_rec_regular_timing_unperturbed_when_far():
    # regulars keep strategic timing while the intruder never conflicts:
    # compare against the strategic plan of the three regulars
    rsc = unrank_recovery(2024, CFG)
    res = run_scenario(rsc, EngineConfig(mode="daa_rec"))
    regs = [a for a in res.aircraft if a.aircraft != rsc.intruder_index]
    for a in regs:
        assert a.entered
    assert res.aircraft[rsc.intruder_index].entered


def test_single_mission_scenario_supported():
    sc = ScenarioConfig(0, (Mission(7, 13),), None)
    res = run_scenario(sc, EngineConfig(mode="strategic_u"))
    assert res.aircraft[0].finished
    assert res.actual_hmd_m is None
    assert res.events == []
