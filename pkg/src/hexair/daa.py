"""Horizontal detect-and-avoid: conflict prediction, heading bands, avoid/resume logic.

Conflict detection extrapolates both aircraft along straight lines at their
current velocities and tests the closest point of approach against a
distance-threshold cylinder (radius ``dthr_m``) within a look-ahead window.
Resolution searches for conflict-free heading bands and prefers the clockwise
recovery, re-evaluating every ``hold_s`` seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .kinematics import CCW, CW, AircraftState, TurnToHeading, wrap_angle

NMI_M = 1852.0
FT_M = 0.3048


@dataclass(frozen=True)
class DaaConfig:
    dthr_m: float = 1219.2          # 0.66 nmi / 4,000 ft protection radius
    lookahead_s: float = 110.0
    hold_s: float = 2.0             # maneuver re-evaluation period
    band_step_deg: float = 1.0
    max_band_search_deg: float = 180.0
    #: extra protection fraction used only when rating candidate headings;
    #: covers the gap between the instant-heading assumption of the band
    #: predictor and the rate-limited turn that actually follows a command
    #: (the gap scales with the protection radius)
    band_margin_frac: float = 0.05

    def __post_init__(self) -> None:
        if self.dthr_m <= 0 or self.lookahead_s <= 0:
            raise ValueError("dthr_m and lookahead_s must be positive")


def dthr_from_nmi(nmi: float) -> float:
    """CLI convention: 0.66 nmi maps to the 4,000 ft radius, others convert exactly."""
    if abs(nmi - 0.66) < 1e-9:
        return 4000.0 * FT_M
    return nmi * NMI_M


class CpaPrediction(NamedTuple):
    t_cpa_s: float
    miss_m: float
    t_violation_s: Optional[float]
    dthr_m: float


@dataclass(frozen=True)
class DaaAlert:
    ownship: int
    intruder: int
    time_to_violation_s: float
    predicted_miss_m: float


@dataclass(frozen=True)
class HeadingBands:
    free_deg: tuple[tuple[float, float], ...]
    cw_recovery_rad: Optional[float]
    ccw_recovery_rad: Optional[float]


@dataclass(frozen=True)
class DaaState:
    mode: str = "cruise"  # cruise | avoiding | resuming


def predict_cpa(own: AircraftState, intr: AircraftState, horizon_s: float,
                dthr_m: float) -> CpaPrediction:
    """Closed-form CPA of two straight-line extrapolations over [0, horizon]."""
    px = intr.x_m - own.x_m
    py = intr.y_m - own.y_m
    ovx, ovy = own.velocity
    ivx, ivy = intr.velocity
    vx, vy = ivx - ovx, ivy - ovy
    a = vx * vx + vy * vy
    b = px * vx + py * vy
    c = px * px + py * py

    if a < 1e-12:
        miss = math.sqrt(c)
        t_viol = 0.0 if miss < dthr_m else None
        return CpaPrediction(0.0, miss, t_viol, dthr_m)

    t_cpa = min(max(-b / a, 0.0), horizon_s)
    miss = math.sqrt(max(c + 2.0 * b * t_cpa + a * t_cpa * t_cpa, 0.0))

    if c < dthr_m * dthr_m:
        return CpaPrediction(t_cpa, miss, 0.0, dthr_m)
    if b >= 0.0:
        return CpaPrediction(t_cpa, miss, None, dthr_m)
    disc = b * b - a * (c - dthr_m * dthr_m)
    if disc < 0.0:
        return CpaPrediction(t_cpa, miss, None, dthr_m)
    t1 = (-b - math.sqrt(disc)) / a
    if t1 > horizon_s:
        return CpaPrediction(t_cpa, miss, None, dthr_m)
    return CpaPrediction(t_cpa, miss, max(t1, 0.0), dthr_m)


def detect(own_id: int, states: Sequence[tuple[int, AircraftState]],
           cfg: DaaConfig) -> list[DaaAlert]:
    """One alert per intruder predicted to violate the cylinder within look-ahead."""
    own = None
    for aid, st in states:
        if aid == own_id:
            own = st
    if own is None or not own.active:
        return []
    alerts = []
    for aid, st in states:
        if aid == own_id or not st.active:
            continue
        pred = predict_cpa(own, st, cfg.lookahead_s, cfg.dthr_m)
        if pred.t_violation_s is not None:
            alerts.append(DaaAlert(own_id, aid, pred.t_violation_s, pred.miss_m))
    alerts.sort(key=lambda al: (al.time_to_violation_s, al.intruder))
    return alerts


def _violation_mask(headings_rad: np.ndarray, own: AircraftState,
                    intruders: Sequence[AircraftState], cfg: DaaConfig) -> np.ndarray:
    """Boolean mask: candidate ownship heading leads to a predicted violation."""
    n = headings_rad.shape[0]
    blocked = np.zeros(n, dtype=bool)
    v = own.speed_mps
    ovx = v * np.cos(headings_rad)
    ovy = v * np.sin(headings_rad)
    horizon = cfg.lookahead_s
    guard = cfg.dthr_m * (1.0 + cfg.band_margin_frac)
    d2 = guard * guard
    for intr in intruders:
        px = intr.x_m - own.x_m
        py = intr.y_m - own.y_m
        ivx, ivy = intr.velocity
        vx = ivx - ovx
        vy = ivy - ovy
        a = vx * vx + vy * vy
        b = px * vx + py * vy
        c = px * px + py * py
        if c < d2:
            blocked[:] = True
            break
        disc = b * b - a * (c - d2)
        with np.errstate(invalid="ignore", divide="ignore"):
            t1 = (-b - np.sqrt(np.maximum(disc, 0.0))) / np.maximum(a, 1e-12)
        hit = (b < 0.0) & (disc >= 0.0) & (t1 <= horizon)
        blocked |= hit
    return blocked


def heading_bands(own: AircraftState, intruders: Sequence[AircraftState],
                  cfg: DaaConfig) -> HeadingBands:
    """Conflict-free headings and the nearest recovery in each turn sense.

    A heading is free when straight-line flight along it predicts no cylinder
    violation against any intruder within the look-ahead.  The clockwise
    (counter-clockwise) recovery is the first free heading scanning from the
    current one in that sense, at band_step resolution, within the search arc.
    """
    live = [s for s in intruders if s.active]
    step = math.radians(cfg.band_step_deg)
    nsearch = int(round(math.radians(cfg.max_band_search_deg) / step))

    grid_deg = np.arange(0.0, 360.0, cfg.band_step_deg)
    h0 = own.heading_rad
    ks = np.arange(0, nsearch + 1)
    cw_cands = h0 - ks * step
    ccw_cands = h0 + ks * step
    ng = grid_deg.shape[0]
    if live:
        combined = np.concatenate((np.radians(grid_deg), cw_cands, ccw_cands))
        mask = _violation_mask(combined, own, live, cfg)
        grid_blocked = mask[:ng]
        cw_blocked = mask[ng:ng + ks.size]
        ccw_blocked = mask[ng + ks.size:]
    else:
        grid_blocked = np.zeros(ng, dtype=bool)
    free_intervals = []
    if not grid_blocked.any():
        free_intervals = [(0.0, 360.0)]
    elif not grid_blocked.all():
        free = ~grid_blocked
        edges = np.flatnonzero(free != np.roll(free, 1))
        if edges.size == 0:
            free_intervals = [(0.0, 360.0)]
        else:
            starts = [e for e in edges if free[e]]
            for s0 in starts:
                e0 = s0
                while free[(e0 + 1) % free.size] and (e0 + 1) % free.size != s0:
                    e0 += 1
                free_intervals.append((float(grid_deg[s0 % free.size]),
                                       float(grid_deg[e0 % free.size])))

    cw_rec = ccw_rec = None
    if live:
        cw_free = np.flatnonzero(~cw_blocked)
        ccw_free = np.flatnonzero(~ccw_blocked)
        if cw_free.size:
            cw_rec = wrap_angle(float(cw_cands[cw_free[0]]))
        if ccw_free.size:
            ccw_rec = wrap_angle(float(ccw_cands[ccw_free[0]]))
    else:
        cw_rec = ccw_rec = wrap_angle(h0)
    return HeadingBands(tuple(free_intervals), cw_rec, ccw_rec)


def daa_step(state: DaaState, own_id: int,
             states: Sequence[tuple[int, AircraftState]], cfg: DaaConfig,
             resume_point: Optional[tuple[float, float]] = None,
             ) -> tuple[Optional[TurnToHeading], DaaState]:
    """One avoid/resume decision, re-run every ``hold_s`` seconds.

    Returns the maneuver command to apply (None keeps the current one) and the
    next mode.  Alert present: prefer the clockwise recovery band, then the
    counter-clockwise one, else continue.  Alerts cleared after avoidance:
    command a turn toward ``resume_point``.
    """
    own = None
    for aid, st in states:
        if aid == own_id:
            own = st
    if own is None or not own.active:
        return None, state

    alerts = detect(own_id, states, cfg)
    intruders = [st for aid, st in states if aid != own_id and st.active]
    if alerts:
        bands = heading_bands(own, intruders, cfg)
        if bands.cw_recovery_rad is not None:
            return TurnToHeading(bands.cw_recovery_rad, CW), DaaState("avoiding")
        if bands.ccw_recovery_rad is not None:
            return TurnToHeading(bands.ccw_recovery_rad, CCW), DaaState("avoiding")
        return None, DaaState("avoiding")

    if state.mode == "avoiding":
        if resume_point is None:
            return None, DaaState("resuming")
        bearing = math.atan2(resume_point[1] - own.y_m, resume_point[0] - own.x_m)
        # never turn back into a predicted conflict: hold the deviation until
        # the resume course itself is clear
        if intruders:
            blocked = _violation_mask(np.array([bearing]), own, intruders, cfg)
            if bool(blocked[0]):
                return None, DaaState("avoiding")
        diff = wrap_angle(bearing - own.heading_rad)
        sense = CCW if diff > 0 else CW
        return TurnToHeading(bearing, sense), DaaState("resuming")
    return None, state


def resume_target(current_cell: Optional[int], remaining_path: Sequence[int],
                  destination: int, cfg) -> tuple[float, float]:
    """Pick the point to seek once alerts clear.

    1. current cell lies on the remaining planned path: head for the next
       path centroid after it;
    2. else, a neighbour of the current cell lies ahead on the remaining path
       (no going back): head for that neighbour's centroid;
    3. else head straight for the destination centroid.
    Without a planned path this is always the destination centroid.
    """
    from .lattice import centroid as cell_centroid
    from .lattice import neighbors as cell_neighbors

    if remaining_path and current_cell is not None:
        path = list(remaining_path)
        if current_cell in path:
            i = path.index(current_cell)
            if i + 1 < len(path):
                return cell_centroid(path[i + 1], cfg)
            return cell_centroid(destination, cfg)
        nbrs = set(cell_neighbors(current_cell, cfg))
        for cell in path:
            if cell in nbrs:
                return cell_centroid(cell, cfg)
    return cell_centroid(destination, cfg)
