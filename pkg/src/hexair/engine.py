"""Deterministic per-scenario simulation loop.

One scenario is one isolated single-threaded simulation.  Within an
integration tick the phases run in a fixed order: arrivals and reservation
releases, collaborative allocation requests in ascending aircraft id, DAA
decisions in ascending id, state integration, then metric sampling.  All
iteration orders are fixed, so identical inputs reproduce identical results
bit for bit.

Modes
-----
daa_u        four aircraft fly direct to their destinations, DAA only
strategic_u  pre-computed optimal occupancy plans, DAA off
daa_rec      three aircraft on strategic plans, an intruder appears at 30 s,
             DAA armed on everyone from that moment
collab_rec   same perturbation, resolved by the reservation protocol instead
collab_u     all four aircraft allocate through the reservation ledger from t=0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from . import collab, daa, kinematics, strategic
from .collab import ReservationLedger
from .daa import DaaConfig, DaaState
from .kinematics import (AircraftState, FollowPath, GuidanceError, HoldHeading,
                         KinematicLimits, PathChain, TurnToHeading)
from .lattice import AirspaceConfig, centroid, locate
from .scenario import ScenarioConfig

EVENT_HMD = "hmd_violation"
EVENT_ASTM = "astm_los"
EVENT_EXCURSION = "excursion"
EVENT_TIMEOUT = "timeout"

MODES = ("daa_u", "strategic_u", "daa_rec", "collab_rec", "collab_u")


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "strategic_u"
    dt_integration_s: float = 0.5
    dt_metric_s: float = 2.0
    timeout_s: float = 1000.0
    excursion_radius_m: float = 10400.0
    hmd_violation_m: float = 1219.2
    astm_los_m: float = 609.6
    capture_radius_m: float = 100.0
    intruder_retry_s: float = 40.0
    daa: DaaConfig = field(default_factory=DaaConfig)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    airspace: AirspaceConfig = field(default_factory=AirspaceConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        ratio = self.dt_metric_s / self.dt_integration_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_metric_s must be an integer multiple of dt_integration_s")

    @property
    def t_cell_s(self) -> float:
        return self.airspace.centroid_spacing_m / self.limits.speed_mps


@dataclass
class CpaRecord:
    aircraft: int
    other: int
    min_distance_m: float
    t_s: float
    own_position: tuple[float, float]
    other_position: tuple[float, float]


@dataclass
class AircraftResult:
    aircraft: int
    origin: int
    destination: int
    entered: bool
    finished: bool
    flight_time_s: Optional[float]
    flown_distance_m: float
    cpa: Optional[CpaRecord]


@dataclass
class ScenarioResult:
    scenario_id: int
    mode: str
    aircraft: list[AircraftResult]
    actual_hmd_m: Optional[float]
    events: list[str]
    anomalies: list[str]


def classify_events(active_positions: list[tuple[float, float]],
                    min_pairwise_m: Optional[float],
                    ec: EngineConfig) -> set[str]:
    """Unsafe events visible in one metric sample (timeout is judged at the end)."""
    events: set[str] = set()
    if min_pairwise_m is not None:
        if min_pairwise_m < ec.hmd_violation_m:
            events.add(EVENT_HMD)
        if min_pairwise_m < ec.astm_los_m:
            events.add(EVENT_ASTM)
    for x, y in active_positions:
        if math.hypot(x, y) > ec.excursion_radius_m:
            events.add(EVENT_EXCURSION)
            break
    return events


class _Craft:
    """Per-aircraft mutable simulation bookkeeping."""

    __slots__ = (
        "aid", "origin", "dest", "origin_xy", "dest_xy", "entered", "spawn_time",
        "state", "cmd", "finished", "finish_time", "on_chain", "chain", "chain_t0",
        "start_flown", "leg_records", "current_cell", "plan", "progress",
        "waypoints", "daa_enabled", "daa_state", "tail", "pending_res",
        "needs_request", "next_attempt", "protocol_entry", "mode_tag", "stuck",
    )

    def __init__(self, aid: int, origin: int, dest: int, ec: EngineConfig):
        self.aid = aid
        self.origin = origin
        self.dest = dest
        self.origin_xy = centroid(origin, ec.airspace)
        self.dest_xy = centroid(dest, ec.airspace)
        self.entered = False
        self.spawn_time = 0.0
        self.state: Optional[AircraftState] = None
        self.cmd = HoldHeading()
        self.finished = False
        self.finish_time: Optional[float] = None
        self.on_chain = False
        self.chain: Optional[PathChain] = None
        self.chain_t0 = 0.0
        self.start_flown = 0.0
        self.leg_records: list[tuple[float, kinematics.Leg]] = []
        self.current_cell = origin
        self.plan: Optional[tuple[int, ...]] = None
        self.progress = 0
        self.waypoints: list[tuple[float, float]] = []
        self.daa_enabled = False
        self.daa_state = DaaState()
        self.tail: Optional[collab.Reservation] = None
        self.pending_res: Optional[collab.Reservation] = None
        self.needs_request = False
        self.next_attempt = 0.0
        self.protocol_entry = False
        self.mode_tag = "idle"
        self.stuck = False

    @property
    def active(self) -> bool:
        return self.entered and not self.finished

    @property
    def planned_through(self) -> float:
        if self.chain is None:
            return self.chain_t0
        return self.chain_t0 + self.chain.length / self.state.speed_mps

    def spawn(self, now: float, xy: tuple[float, float], heading: float,
              ec: EngineConfig) -> None:
        self.entered = True
        self.spawn_time = now
        self.state = AircraftState(xy[0], xy[1], heading, ec.limits.speed_mps)

    def start_chain(self, now: float) -> None:
        self.chain = PathChain((self.state.x_m, self.state.y_m, self.state.heading_rad))
        self.chain_t0 = now
        self.start_flown = self.state.flown_distance_m
        self.on_chain = True
        self.cmd = FollowPath(self.chain, self.start_flown)

    def append_leg(self, leg: kinematics.Leg) -> None:
        self.chain.append(leg.path)
        self.leg_records.append((self.chain.length, leg))

    def flown_on_chain(self) -> float:
        return self.state.flown_distance_m - self.start_flown


class _Sim:
    def __init__(self, sc: ScenarioConfig, ec: EngineConfig,
                 trace: Optional[list] = None):
        self.sc = sc
        self.ec = ec
        self.trace = trace
        self.anomalies: list[str] = []
        self.events: set[str] = set()
        self.actual_hmd: Optional[float] = None
        self.ledger = ReservationLedger()
        self.crafts = [
            _Craft(i, m.origin, m.destination, ec)
            for i, m in enumerate(sc.missions)
        ]
        self.intruder_idx = sc.intruder_index
        self._setup()

    # -- setup ---------------------------------------------------------------

    def _solve_plan(self, aircraft: list[_Craft]) -> Optional[dict[int, tuple[int, ...]]]:
        problem = strategic.AllocationProblem(
            self.ec.airspace,
            tuple((c.aid, c.origin, c.dest) for c in aircraft))
        try:
            plan = strategic.solve(problem)
        except strategic.AllocationInfeasible as exc:
            self.anomalies.append(f"strategic allocation infeasible: {exc}")
            return None
        return plan.paths

    def _build_strategic_chain(self, craft: _Craft, path: tuple[int, ...]) -> None:
        cfg, lim = self.ec.airspace, self.ec.limits
        craft.plan = path
        craft.progress = 0
        if len(path) == 1:
            craft.spawn(0.0, craft.origin_xy, 0.0, self.ec)
            craft.start_chain(0.0)
            craft.mode_tag = "legs"
            return
        h0 = kinematics.link_heading(path[0], path[1], cfg)
        craft.spawn(0.0, craft.origin_xy, h0, self.ec)
        craft.start_chain(0.0)
        craft.mode_tag = "legs"
        try:
            b = kinematics.border_midpoint(path[0], path[1], cfg)
            dep = kinematics.Leg(
                kinematics.build_path((craft.origin_xy[0], craft.origin_xy[1], h0),
                                      [("s", cfg.centroid_spacing_m / 2.0)],
                                      lim.turn_radius_m),
                path[0], path[1], "transit")
            craft.append_leg(dep)
            for k in range(1, len(path) - 1):
                entry = kinematics.border_midpoint(path[k - 1], path[k], cfg)
                h = kinematics.link_heading(path[k - 1], path[k], cfg)
                craft.append_leg(kinematics.plan_leg(entry, h, path[k], path[k + 1], cfg, lim))
            entry = kinematics.border_midpoint(path[-2], path[-1], cfg)
            h = kinematics.link_heading(path[-2], path[-1], cfg)
            craft.append_leg(kinematics.plan_arrival((entry[0], entry[1], h), path[-1], cfg, lim))
        except GuidanceError as exc:
            self.anomalies.append(f"aircraft {craft.aid}: {exc}")
            craft.stuck = True
            craft.cmd = HoldHeading()

    def _setup(self) -> None:
        ec = self.ec
        mode = ec.mode
        T = ec.t_cell_s

        if mode in ("strategic_u", "daa_rec", "collab_rec"):
            strategic_ids = [c for c in self.crafts
                             if mode == "strategic_u" or c.aid != self.intruder_idx]
            paths = self._solve_plan(strategic_ids)
        else:
            paths = {}

        for craft in self.crafts:
            is_intruder = (mode in ("daa_rec", "collab_rec")
                           and craft.aid == self.intruder_idx)

            if mode == "daa_u":
                h0 = math.atan2(craft.dest_xy[1] - craft.origin_xy[1],
                                craft.dest_xy[0] - craft.origin_xy[0])
                craft.spawn(0.0, craft.origin_xy, h0, ec)
                craft.daa_enabled = True
                craft.waypoints = [craft.dest_xy]
                craft.mode_tag = "direct"

            elif mode == "strategic_u":
                if paths is None:
                    craft.entered = True
                    craft.state = AircraftState(*craft.origin_xy, 0.0, ec.limits.speed_mps)
                    craft.stuck = True
                else:
                    self._build_strategic_chain(craft, paths[craft.aid])

            elif mode == "daa_rec":
                craft.daa_enabled = True
                if is_intruder:
                    craft.next_attempt = self.sc.intruder_entry_s
                    craft.waypoints = [craft.dest_xy]
                    craft.mode_tag = "waiting"
                elif paths is None:
                    craft.entered = True
                    craft.state = AircraftState(*craft.origin_xy, 0.0, ec.limits.speed_mps)
                    craft.stuck = True
                else:
                    self._build_strategic_chain(craft, paths[craft.aid])

            elif mode == "collab_u":
                h0 = math.atan2(craft.dest_xy[1] - craft.origin_xy[1],
                                craft.dest_xy[0] - craft.origin_xy[0])
                craft.spawn(0.0, craft.origin_xy, h0, ec)
                craft.start_chain(0.0)
                craft.tail = self.ledger.grant(craft.origin, craft.aid, 0.0, T)
                craft.needs_request = True
                craft.mode_tag = "legs"

            elif mode == "collab_rec":
                if is_intruder:
                    craft.protocol_entry = True
                    craft.next_attempt = self.sc.intruder_entry_s
                    craft.mode_tag = "waiting"
                elif paths is None:
                    craft.entered = True
                    craft.state = AircraftState(*craft.origin_xy, 0.0, ec.limits.speed_mps)
                    craft.stuck = True
                else:
                    self._seed_collab_regular(craft, paths[craft.aid])

    def _seed_collab_regular(self, craft: _Craft, path: tuple[int, ...]) -> None:
        """Regulars fly their strategic plan; the ledger holds their committed window."""
        ec = self.ec
        cfg, lim = ec.airspace, ec.limits
        T = ec.t_cell_s
        craft.plan = path
        if len(path) == 1:
            craft.spawn(0.0, craft.origin_xy, 0.0, ec)
            craft.start_chain(0.0)
            craft.tail = self.ledger.grant(craft.origin, craft.aid, 0.0, T)
            return
        h0 = kinematics.link_heading(path[0], path[1], cfg)
        craft.spawn(0.0, craft.origin_xy, h0, ec)
        craft.start_chain(0.0)
        craft.mode_tag = "legs"
        dep = kinematics.Leg(
            kinematics.build_path((craft.origin_xy[0], craft.origin_xy[1], h0),
                                  [("s", cfg.centroid_spacing_m / 2.0)],
                                  lim.turn_radius_m),
            path[0], path[1], "transit")
        craft.append_leg(dep)
        craft.tail = self.ledger.grant(path[0], craft.aid, 0.0, T / 2.0)
        craft.pending_res = self.ledger.grant(path[1], craft.aid, T / 2.0, T / 2.0 + T)

    # -- per-tick phases -------------------------------------------------------

    def _phase_arrivals(self, now: float) -> None:
        for craft in self.crafts:
            if not craft.active:
                continue
            dx = craft.state.x_m - craft.dest_xy[0]
            dy = craft.state.y_m - craft.dest_xy[1]
            d = math.hypot(dx, dy)
            if d <= self.ec.capture_radius_m:
                # credit the straight remainder so flown distance and flight
                # time describe the full run to the centroid
                craft.state.x_m, craft.state.y_m = craft.dest_xy
                craft.state.flown_distance_m += d
                craft.finished = True
                craft.finish_time = now + d / craft.state.speed_mps
                craft.state.active = False
                if self.ec.mode in ("collab_u", "collab_rec") and craft.tail is not None:
                    self.ledger.release_on_arrival(craft.aid, now)

    def _enter_cell(self, craft: _Craft, leg: kinematics.Leg) -> None:
        craft.current_cell = leg.to_cell
        if craft.plan and craft.progress + 1 < len(craft.plan) \
                and craft.plan[craft.progress + 1] == leg.to_cell:
            craft.progress += 1
        if craft.pending_res is not None:
            craft.tail = craft.pending_res
            craft.pending_res = None
        if leg.to_cell == craft.dest:
            pose = craft.chain.end_pose
            try:
                craft.append_leg(kinematics.plan_arrival(
                    pose, craft.dest, self.ec.airspace, self.ec.limits))
            except GuidanceError as exc:
                self.anomalies.append(f"aircraft {craft.aid}: {exc}")
                craft.stuck = True
            craft.needs_request = False
        else:
            craft.needs_request = self.ec.mode in ("collab_u", "collab_rec")

    def _phase_chain(self, now: float) -> None:
        ec = self.ec
        collab_mode = ec.mode in ("collab_u", "collab_rec")
        T = ec.t_cell_s
        dt = ec.dt_integration_s
        ready: list[_Craft] = []

        for craft in self.crafts:
            # protocol / scheduled entries
            if not craft.entered and craft.state is None and not craft.finished:
                if ec.mode == "daa_rec" and craft.aid == self.intruder_idx:
                    if now >= self.sc.intruder_entry_s - 1e-9:
                        h0 = math.atan2(craft.dest_xy[1] - craft.origin_xy[1],
                                        craft.dest_xy[0] - craft.origin_xy[0])
                        craft.spawn(now, craft.origin_xy, h0, ec)
                        craft.mode_tag = "direct"
                elif craft.protocol_entry and now >= craft.next_attempt - 1e-9:
                    res = collab.intruder_entry(craft.aid, craft.origin, self.ledger,
                                                craft.next_attempt, T)
                    if res is None:
                        craft.next_attempt += ec.intruder_retry_s
                    else:
                        h0 = math.atan2(craft.dest_xy[1] - craft.origin_xy[1],
                                        craft.dest_xy[0] - craft.origin_xy[0])
                        craft.spawn(now, craft.origin_xy, h0, ec)
                        craft.start_chain(now)
                        craft.tail = res
                        craft.needs_request = True
                        craft.mode_tag = "legs"

            if not craft.active or not craft.on_chain or craft.stuck:
                continue

            # leg completions: cell entries and plan progress
            s_now = craft.flown_on_chain()
            while craft.leg_records and s_now >= craft.leg_records[0][0] - 1e-6:
                _, leg = craft.leg_records.pop(0)
                if leg.kind in ("transit", "centroid_exit") and leg.to_cell != leg.from_cell:
                    self._enter_cell(craft, leg)
            if craft.leg_records:
                head = craft.leg_records[0][1]
                craft.mode_tag = "hold" if head.kind.startswith("hold") else "legs"

            # next-cell requests resolve as soon as the committed path runs out
            if (collab_mode and craft.needs_request
                    and now >= craft.planned_through - 1.5 * dt):
                self._resolve_request(craft)

    def _resolve_request(self, craft: _Craft) -> None:
        ec = self.ec
        preferred: tuple[int, ...] = ()
        if craft.plan:
            preferred = craft.plan[craft.progress + 1:]
        try:
            outcome = collab.request_next_cell(
                craft.aid, craft.tail, craft.dest, self.ledger,
                ec.airspace, ec.t_cell_s, preferred)
        except ValueError as exc:
            self.anomalies.append(f"aircraft {craft.aid}: {exc}")
            craft.stuck = True
            craft.cmd = HoldHeading()
            return
        pose = craft.chain.end_pose
        try:
            if outcome.held:
                leg = kinematics.plan_hold(pose, craft.current_cell, ec.airspace, ec.limits)
                craft.append_leg(leg)
                craft.tail = outcome.reservation
                craft.mode_tag = "hold"
            else:
                leg = kinematics.plan_leg((pose[0], pose[1]), pose[2],
                                          craft.current_cell, outcome.reservation.cell,
                                          ec.airspace, ec.limits)
                craft.append_leg(leg)
                craft.pending_res = outcome.reservation
                craft.needs_request = False
        except GuidanceError as exc:
            self.anomalies.append(f"aircraft {craft.aid}: {exc}")
            craft.stuck = True
            craft.cmd = HoldHeading()

    def _phase_daa(self, now: float) -> None:
        ec = self.ec
        if ec.mode in ("strategic_u", "collab_u", "collab_rec"):
            return
        if ec.mode == "daa_rec" and now < self.sc.intruder_entry_s - 1e-9:
            return
        states = [(c.aid, c.state) for c in self.crafts if c.active]
        for craft in self.crafts:
            if not craft.active or not craft.daa_enabled:
                continue
            if craft.plan and not craft.on_chain:
                cell_here = locate(craft.state.position, ec.airspace)
                if (craft.progress + 1 < len(craft.plan)
                        and cell_here == craft.plan[craft.progress + 1]):
                    craft.progress += 1
            resume_pt = None
            if craft.daa_state.mode == "avoiding":
                cell_here = locate(craft.state.position, ec.airspace)
                remaining = craft.plan[craft.progress + 1:] if craft.plan else ()
                resume_pt = daa.resume_target(cell_here, remaining, craft.dest, ec.airspace)
            cmd, new_state = daa.daa_step(craft.daa_state, craft.aid, states,
                                          ec.daa, resume_pt)
            prev_mode = craft.daa_state.mode
            craft.daa_state = new_state

            if new_state.mode == "avoiding":
                craft.on_chain = False
                craft.mode_tag = "avoid"
                if cmd is not None:
                    craft.cmd = cmd
                continue
            if prev_mode == "avoiding" and new_state.mode == "resuming":
                craft.waypoints = self._resume_waypoints(craft, resume_pt)
                craft.mode_tag = "resume"
                if cmd is not None:
                    craft.cmd = cmd
                continue
            # cruise / resuming without alerts: waypoint guidance (chain flyers
            # keep following their planned legs)
            if craft.on_chain:
                continue
            self._waypoint_guidance(craft)

    def _resume_waypoints(self, craft: _Craft, resume_pt) -> list[tuple[float, float]]:
        if resume_pt is None:
            return [craft.dest_xy]
        if craft.plan:
            cfg = self.ec.airspace
            for i in range(craft.progress + 1, len(craft.plan)):
                cx, cy = centroid(craft.plan[i], cfg)
                if abs(cx - resume_pt[0]) < 1.0 and abs(cy - resume_pt[1]) < 1.0:
                    return [centroid(c, cfg) for c in craft.plan[i:]]
        return [resume_pt]

    def _waypoint_guidance(self, craft: _Craft) -> None:
        while craft.waypoints:
            wp = craft.waypoints[0]
            d = math.hypot(craft.state.x_m - wp[0], craft.state.y_m - wp[1])
            if d <= self.ec.capture_radius_m and len(craft.waypoints) > 1:
                craft.waypoints.pop(0)
                continue
            break
        target = craft.waypoints[0] if craft.waypoints else craft.dest_xy
        craft.cmd = kinematics.direct_to(craft.state, target)

    def _phase_integrate(self, now: float) -> None:
        dt = self.ec.dt_integration_s
        for craft in self.crafts:
            if craft.active:
                craft.state = kinematics.integrate(craft.state, craft.cmd,
                                                   self.ec.limits, dt)

    def _sample_metrics(self, now: float,
                        cpa: dict[int, CpaRecord]) -> None:
        actives = [c for c in self.crafts if c.active]
        positions = [c.state.position for c in actives]
        min_pair = None
        for i in range(len(actives)):
            a = actives[i]
            for j in range(i + 1, len(actives)):
                b = actives[j]
                d = math.hypot(a.state.x_m - b.state.x_m, a.state.y_m - b.state.y_m)
                if min_pair is None or d < min_pair:
                    min_pair = d
                for craft, other in ((a, b), (b, a)):
                    rec = cpa.get(craft.aid)
                    if rec is None or d < rec.min_distance_m:
                        cpa[craft.aid] = CpaRecord(
                            craft.aid, other.aid, d, now,
                            craft.state.position, other.state.position)
        if min_pair is not None:
            if self.actual_hmd is None or min_pair < self.actual_hmd:
                self.actual_hmd = min_pair
        self.events |= classify_events(positions, min_pair, self.ec)

        if self.trace is not None:
            for c in actives:
                cell = locate(c.state.position, self.ec.airspace)
                self.trace.append((
                    "state", now, c.aid, c.state.x_m, c.state.y_m,
                    math.degrees(kinematics.wrap_angle(c.state.heading_rad)),
                    c.mode_tag, -1 if cell is None else cell, "", ""))

    # -- main loop -------------------------------------------------------------

    def run(self) -> ScenarioResult:
        ec = self.ec
        dt = ec.dt_integration_s
        metric_every = round(ec.dt_metric_s / dt)
        cpa: dict[int, CpaRecord] = {}
        now = 0.0
        tick = 0
        while True:
            self._phase_arrivals(now)
            if all(c.finished for c in self.crafts):
                break
            self._phase_chain(now)
            if tick % metric_every == 0:
                self._phase_daa(now)
                self._sample_metrics(now, cpa)
            if now >= ec.timeout_s - 1e-9:
                break
            self._phase_integrate(now)
            now += dt
            tick += 1

        unfinished = [c for c in self.crafts if not c.finished]
        if unfinished:
            self.events.add(EVENT_TIMEOUT)

        results = []
        for c in self.crafts:
            results.append(AircraftResult(
                c.aid, c.origin, c.dest, c.entered, c.finished,
                None if c.finish_time is None else c.finish_time - c.spawn_time,
                0.0 if c.state is None else c.state.flown_distance_m,
                cpa.get(c.aid)))
        if self.trace is not None:
            for rec in sorted(cpa.values(), key=lambda r: r.aircraft):
                self.trace.append((
                    "cpa", rec.t_s, rec.aircraft, rec.own_position[0],
                    rec.own_position[1], "", "", "", rec.other,
                    rec.min_distance_m))
        return ScenarioResult(
            self.sc.scenario_id, ec.mode, results, self.actual_hmd,
            sorted(self.events), self.anomalies)


def run_scenario(sc: ScenarioConfig, ec: EngineConfig,
                 trace: Optional[list] = None) -> ScenarioResult:
    """Simulate one scenario; ``trace`` (a list) collects rows when provided."""
    return _Sim(sc, ec, trace).run()
