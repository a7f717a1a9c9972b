"""Point-mass aircraft motion and constant-occupation leg planning.

Aircraft fly at constant speed with a bounded turn rate.  Structured guidance
(strategic and collaborative modes) moves them between cell border midpoints
and centroids along planned paths whose in-cell length is exact, so every
cell transit takes the same time T_cell = centroid_spacing / speed.

A planned path is a sequence of straight segments and maximum-rate circular
arcs.  Because a fly-by arc always shortens a cornered route, exact-length
turning legs need a swing-out: the turn starts early and passes on the outer
side of the corner before re-aligning.  Three closed-form families cover all
cases; for a given swing angle the segment lengths solve a small linear
system that already includes the total-length constraint, so any feasible
swing angle yields an exact-length path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .lattice import AirspaceConfig, centroid, point_in_cell

CCW = 1
CW = -1

TWO_PI = 2.0 * math.pi


class GuidanceError(Exception):
    """A leg with the required timing cannot be constructed."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class KinematicLimits:
    speed_mps: float = 44.4
    turn_rate_radps: float = math.radians(6.5)

    @property
    def turn_radius_m(self) -> float:
        return self.speed_mps / self.turn_rate_radps


@dataclass
class AircraftState:
    x_m: float
    y_m: float
    heading_rad: float
    speed_mps: float
    flown_distance_m: float = 0.0
    active: bool = True

    @property
    def position(self) -> tuple[float, float]:
        return (self.x_m, self.y_m)

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.speed_mps * math.cos(self.heading_rad),
                self.speed_mps * math.sin(self.heading_rad))


# --------------------------------------------------------------------------
# guidance commands


@dataclass(frozen=True)
class HoldHeading:
    pass


@dataclass(frozen=True)
class TurnToHeading:
    target_rad: float
    sense: int  # CW or CCW


@dataclass(frozen=True)
class FollowPath:
    chain: "PathChain"
    start_flown_m: float


GuidanceCommand = HoldHeading | TurnToHeading | FollowPath


# --------------------------------------------------------------------------
# path geometry


@dataclass(frozen=True)
class _Segment:
    kind: str  # "s" straight | "a" arc
    x0: float
    y0: float
    h0: float
    length: float
    sigma: int = 0
    radius: float = 0.0

    def pose_at(self, s: float) -> tuple[float, float, float]:
        if self.kind == "s":
            return (self.x0 + s * math.cos(self.h0),
                    self.y0 + s * math.sin(self.h0),
                    self.h0)
        swept = self.sigma * s / self.radius
        # centre sits on the turn side: sigma * R along the left normal of h0
        cx = self.x0 - self.sigma * self.radius * math.sin(self.h0)
        cy = self.y0 + self.sigma * self.radius * math.cos(self.h0)
        rx = self.x0 - cx
        ry = self.y0 - cy
        cos_w, sin_w = math.cos(swept), math.sin(swept)
        return (cx + rx * cos_w - ry * sin_w,
                cy + rx * sin_w + ry * cos_w,
                self.h0 + swept)


class Path:
    """Immutable piecewise path; poses are exact functions of arc length."""

    __slots__ = ("segments", "cum", "length")

    def __init__(self, segments: list[_Segment]):
        self.segments = segments
        cum = []
        total = 0.0
        for seg in segments:
            total += seg.length
            cum.append(total)
        self.cum = cum
        self.length = total

    def pose_at(self, s: float) -> tuple[float, float, float]:
        if s <= 0.0:
            seg = self.segments[0]
            return seg.pose_at(0.0)
        if s >= self.length:
            seg = self.segments[-1]
            return seg.pose_at(seg.length)
        lo = 0
        prev_end = 0.0
        for i, end in enumerate(self.cum):
            if s <= end:
                lo = i
                break
            prev_end = end
        return self.segments[lo].pose_at(s - prev_end)

    @property
    def end_pose(self) -> tuple[float, float, float]:
        seg = self.segments[-1]
        return seg.pose_at(seg.length)


def build_path(start: tuple[float, float, float],
               spec: list[tuple], radius: float) -> Path:
    """Materialize a path from (kind, ...) spec tuples starting at a pose.

    Spec entries: ("s", length) or ("a", sigma, sweep_rad).
    """
    x, y, h = start
    segs: list[_Segment] = []
    for item in spec:
        if item[0] == "s":
            length = item[1]
            if length < 1e-9:
                continue
            seg = _Segment("s", x, y, h, length)
        else:
            sigma, sweep = item[1], item[2]
            if sweep < 1e-12:
                continue
            seg = _Segment("a", x, y, h, radius * sweep, sigma, radius)
        segs.append(seg)
        x, y, h = seg.pose_at(seg.length)
    if not segs:
        segs = [_Segment("s", x, y, h, 0.0)]
    return Path(segs)


class PathChain:
    """A growing sequence of paths addressed by global arc length."""

    __slots__ = ("initial_pose", "paths", "offsets", "length")

    def __init__(self, initial_pose: tuple[float, float, float]) -> None:
        self.initial_pose = initial_pose
        self.paths: list[Path] = []
        self.offsets: list[float] = []
        self.length = 0.0

    def append(self, path: Path) -> None:
        self.paths.append(path)
        self.offsets.append(self.length)
        self.length += path.length

    def pose_at(self, s: float) -> tuple[float, float, float]:
        if not self.paths:
            return self.initial_pose
        if s >= self.length:
            return self.paths[-1].pose_at(self.paths[-1].length)
        idx = len(self.paths) - 1
        for i in range(len(self.paths) - 1, -1, -1):
            if s >= self.offsets[i]:
                idx = i
                break
        return self.paths[idx].pose_at(s - self.offsets[idx])

    @property
    def end_pose(self) -> tuple[float, float, float]:
        if not self.paths:
            return self.initial_pose
        return self.paths[-1].end_pose


# --------------------------------------------------------------------------
# exact-length connection solver


def _arc_disp(h1: float, h2: float, sigma: int, radius: float) -> complex:
    return 1j * sigma * radius * (
        complex(math.cos(h1), math.sin(h1)) - complex(math.cos(h2), math.sin(h2)))


def _det3(m) -> float:
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _solve3(m, v) -> Optional[tuple[float, float, float]]:
    d = _det3(m)
    if abs(d) < 1e-9:
        return None
    out = []
    for c in range(3):
        n = [row[:] for row in m]
        for r in range(3):
            n[r][c] = v[r]
        out.append(_det3(n) / d)
    return tuple(out)


def _delta_from(psi: float, sigma: int) -> float:
    d = sigma * psi
    while d < -1e-12:
        d += TWO_PI
    return max(d, 0.0)


def _fam_two_arc(D: complex, psi: float, sigma: int, phi: float,
                 radius: float, target: float, main_first: bool) -> Optional[list[tuple]]:
    """[a, arc(+/-), m, arc(-/+), b]: main turn of delta+phi plus a counter swing phi."""
    delta = _delta_from(psi, sigma)
    if main_first:
        h1 = sigma * (delta + phi)
        s1 = sigma
    else:
        h1 = -sigma * phi
        s1 = -sigma
    h2 = sigma * delta
    s2 = -s1
    sweep1 = delta + phi if main_first else phi
    sweep2 = phi if main_first else delta + phi
    lrem = target - radius * (delta + 2.0 * phi)
    if lrem < -1e-9:
        return None
    K = D - _arc_disp(0.0, h1, s1, radius) - _arc_disp(h1, h2, s2, radius)
    e1 = complex(math.cos(h1), math.sin(h1))
    e2 = complex(math.cos(h2), math.sin(h2))
    sol = _solve3(
        [[1.0, e1.real, e2.real], [0.0, e1.imag, e2.imag], [1.0, 1.0, 1.0]],
        [K.real, K.imag, lrem])
    if sol is None:
        return None
    a, m, b = sol
    if a < -1e-9 or m < -1e-9 or b < -1e-9:
        return None
    return [("s", max(a, 0.0)), ("a", s1, sweep1), ("s", max(m, 0.0)),
            ("a", s2, sweep2), ("s", max(b, 0.0))]


def _fam_three_arc(D: complex, psi: float, sigma: int, phi: float,
                   radius: float, target: float) -> Optional[list[tuple]]:
    """Symmetric-ended S: [a, arc(sigma,phi), m1, arc(-sigma,2phi-sigma*psi), m2, arc(sigma,phi), a]."""
    mid = 2.0 * phi - sigma * psi
    if mid < 0.0:
        return None
    h1 = sigma * phi
    h2 = psi - sigma * phi
    lrem = target - radius * (2.0 * phi + mid)
    if lrem < -1e-9:
        return None
    arcs = (_arc_disp(0.0, h1, sigma, radius)
            + _arc_disp(h1, h2, -sigma, radius)
            + _arc_disp(h2, psi, sigma, radius))
    K = D - arcs
    e1 = complex(math.cos(h1), math.sin(h1))
    e2 = complex(math.cos(h2), math.sin(h2))
    e3 = complex(math.cos(psi), math.sin(psi))
    ea = 1.0 + e3
    sol = _solve3(
        [[ea.real, e1.real, e2.real], [ea.imag, e1.imag, e2.imag], [2.0, 1.0, 1.0]],
        [K.real, K.imag, lrem])
    if sol is None:
        # degenerate (psi ~ 0): lateral components self-balance, force m1 = m2
        if abs(K.imag) > 1e-6:
            return None
        cos1 = 0.5 * (e1.real + e2.real)
        denom = 2.0 * (1.0 - cos1)
        if abs(denom) < 1e-12:
            return None
        m = (lrem - K.real) / denom
        a = 0.5 * (lrem - 2.0 * m)
        sol = (a, m, m)
    a, m1, m2 = sol
    if a < -1e-9 or m1 < -1e-9 or m2 < -1e-9:
        return None
    return [("s", max(a, 0.0)), ("a", sigma, phi), ("s", max(m1, 0.0)),
            ("a", -sigma, mid), ("s", max(m2, 0.0)), ("a", sigma, phi),
            ("s", max(a, 0.0))]


_PHI_SCAN_DEG = [x * 0.25 for x in range(1, 721)]

_connection_cache: dict[tuple, Optional[list[tuple]]] = {}


def solve_connection(D: complex, psi: float, target: float, radius: float,
                     contained: Callable[[list[tuple]], bool]) -> Optional[list[tuple]]:
    """Exact-length path spec from pose (0,0,0) to pose (D, psi), or None.

    ``contained`` vets a candidate spec (cell containment); the first feasible
    candidate in a fixed family/swing-angle scan order wins, which makes leg
    construction deterministic.
    """
    if abs(psi) < 1e-12 and abs(D.imag) < 1e-9 and abs(D.real - target) < 1e-9:
        spec = [("s", target)]
        return spec if contained(spec) else None
    sig0 = CCW if psi > 0 else CW
    if abs(psi) < 1e-12:
        sig0 = CW
    families = (
        ("two_main", sig0), ("two_counter", sig0),
        ("two_main", -sig0), ("two_counter", -sig0),
        ("three", sig0), ("three", -sig0),
    )
    for fam, sigma in families:
        for phi_deg in _PHI_SCAN_DEG:
            phi = math.radians(phi_deg)
            if fam == "two_main":
                spec = _fam_two_arc(D, psi, sigma, phi, radius, target, True)
            elif fam == "two_counter":
                spec = _fam_two_arc(D, psi, sigma, phi, radius, target, False)
            else:
                spec = _fam_three_arc(D, psi, sigma, phi, radius, target)
            if spec is None:
                continue
            if contained(spec):
                return spec
    return None


# --------------------------------------------------------------------------
# leg planning


@dataclass(frozen=True)
class Leg:
    path: Path
    from_cell: int
    to_cell: int  # == from_cell for holds
    kind: str     # transit | centroid_exit | hold_entry | hold_orbit | arrival


def _spec_contained(start: tuple[float, float, float], spec: list[tuple],
                    radius: float, cell: int, cfg: AirspaceConfig) -> bool:
    path = build_path(start, spec, radius)
    step = 25.0
    n = max(2, int(path.length / step))
    for i in range(1, n):
        s = path.length * i / n
        x, y, _ = path.pose_at(s)
        if not point_in_cell((x, y), cell, cfg, slack_m=1.0):
            return False
    return True


def _plan_connection(start: tuple[float, float, float],
                     end: tuple[float, float, float],
                     target_len: float, cell: int,
                     cfg: AirspaceConfig, limits: KinematicLimits) -> Path:
    x0, y0, h0 = start
    x1, y1, h1 = end
    cos0, sin0 = math.cos(-h0), math.sin(-h0)
    dx, dy = x1 - x0, y1 - y0
    D = complex(dx * cos0 - dy * sin0, dx * sin0 + dy * cos0)
    psi = wrap_angle(h1 - h0)
    radius = limits.turn_radius_m

    # cell centre in the start-local frame, for cache keying + containment
    cx, cy = centroid(cell, cfg)
    dcx, dcy = cx - x0, cy - y0
    c_local = (round(dcx * cos0 - dcy * sin0, 3), round(dcx * sin0 + dcy * cos0, 3))

    key = (round(D.real, 3), round(D.imag, 3), round(psi, 9),
           round(target_len, 3), round(radius, 6), c_local,
           round(cfg.centroid_spacing_m, 3), cfg.radius_rings)
    spec = _connection_cache.get(key, False)
    if spec is False:
        def contained(sp: list[tuple]) -> bool:
            return _spec_contained(start, sp, radius, cell, cfg)
        spec = solve_connection(D, psi, target_len, radius, contained)
        _connection_cache[key] = spec
    if spec is None:
        raise GuidanceError(
            f"no feasible leg: cell {cell}, turn {math.degrees(psi):.1f} deg, "
            f"length {target_len:.0f} m")
    return build_path(start, spec, radius)


def border_midpoint(from_cell: int, to_cell: int, cfg: AirspaceConfig) -> tuple[float, float]:
    ax, ay = centroid(from_cell, cfg)
    bx, by = centroid(to_cell, cfg)
    return (0.5 * (ax + bx), 0.5 * (ay + by))


def link_heading(from_cell: int, to_cell: int, cfg: AirspaceConfig) -> float:
    ax, ay = centroid(from_cell, cfg)
    bx, by = centroid(to_cell, cfg)
    return math.atan2(by - ay, bx - ax)


def plan_leg(entry: tuple[float, float], entry_heading: float,
             from_cell: int, to_cell: int,
             cfg: AirspaceConfig, limits: KinematicLimits) -> Leg:
    """Plan one cell's worth of flight starting at ``entry``.

    The leg stays inside ``from_cell`` until its final point, lasts exactly
    T_cell = spacing / speed, and (for a transit) ends on the shared border
    midpoint heading along the link into ``to_cell``.  ``to_cell == from_cell``
    produces a holding pattern instead.
    """
    s = cfg.centroid_spacing_m
    start = (entry[0], entry[1], entry_heading)
    if to_cell == from_cell:
        return plan_hold(start, from_cell, cfg, limits)
    cx, cy = centroid(from_cell, cfg)
    at_centroid = math.hypot(entry[0] - cx, entry[1] - cy) < 1.0
    bx, by = border_midpoint(from_cell, to_cell, cfg)
    w = link_heading(from_cell, to_cell, cfg)
    path = _plan_connection(start, (bx, by, w), s, from_cell, cfg, limits)
    return Leg(path, from_cell, to_cell,
               "centroid_exit" if at_centroid else "transit")


def plan_hold(pose: tuple[float, float, float], cell: int,
              cfg: AirspaceConfig, limits: KinematicLimits) -> Leg:
    """A one-T_cell holding pattern wholly inside ``cell``.

    From the cell centroid this is a closed circle of circumference
    ``spacing`` (radius ~ spacing/2pi, comfortably above the minimum turn
    radius at the default scale).  From a border entry it is an exact-length
    S-path to the centroid, so repeated holds settle onto centroid circles.
    """
    s = cfg.centroid_spacing_m
    cx, cy = centroid(cell, cfg)
    x, y, h = pose
    if math.hypot(x - cx, y - cy) < 1.0:
        rho = s / TWO_PI
        if rho < limits.turn_radius_m - 1e-9:
            raise GuidanceError(
                f"holding circle radius {rho:.0f} m below minimum turn radius")
        spec = [("a", CW, TWO_PI)]
        path = build_path(pose, spec, rho)
        return Leg(path, cell, cell, "hold_orbit")
    path = _plan_connection(pose, (cx, cy, h), s, cell, cfg, limits)
    return Leg(path, cell, cell, "hold_entry")


def plan_arrival(pose: tuple[float, float, float], cell: int,
                 cfg: AirspaceConfig, limits: KinematicLimits) -> Leg:
    """Straight run from a border entry to the destination cell centroid."""
    cx, cy = centroid(cell, cfg)
    x, y, h = pose
    dist = math.hypot(cx - x, cy - y)
    bearing = math.atan2(cy - y, cx - x) if dist > 1e-9 else h
    if dist > 1e-9 and abs(wrap_angle(bearing - h)) > math.radians(2.0):
        # entry heading should already point at the centroid; fall back to a
        # planned connection if it does not
        path = _plan_connection(pose, (cx, cy, bearing), dist, cell, cfg, limits)
    else:
        path = build_path(pose, [("s", dist)], limits.turn_radius_m)
    return Leg(path, cell, cell, "arrival")


# --------------------------------------------------------------------------
# state integration


def integrate(state: AircraftState, cmd: GuidanceCommand,
              limits: KinematicLimits, dt: float) -> AircraftState:
    """Advance one integration step; speed is constant, turns are rate-limited."""
    v = state.speed_mps
    step = v * dt
    if isinstance(cmd, FollowPath):
        s1 = state.flown_distance_m + step - cmd.start_flown_m
        chain = cmd.chain
        if s1 <= chain.length + 1e-9:
            x, y, h = chain.pose_at(s1)
        else:
            x0, y0, h = chain.end_pose
            over = s1 - chain.length
            x = x0 + over * math.cos(h)
            y = y0 + over * math.sin(h)
        return AircraftState(x, y, h, v, state.flown_distance_m + step, state.active)

    if isinstance(cmd, TurnToHeading):
        diff = wrap_angle(cmd.target_rad - state.heading_rad)
        if cmd.sense == CCW:
            remaining = diff if diff >= 0 else diff + TWO_PI
        else:
            remaining = -diff if diff <= 0 else TWO_PI - diff
        turnable = limits.turn_rate_radps * dt
        sweep = min(remaining, turnable)
        x, y, h = state.x_m, state.y_m, state.heading_rad
        if sweep > 1e-12:
            radius = limits.turn_radius_m
            seg = _Segment("a", x, y, h, radius * sweep, cmd.sense, radius)
            x, y, h = seg.pose_at(seg.length)
        straight = step - limits.turn_radius_m * sweep
        if straight > 1e-12:
            x += straight * math.cos(h)
            y += straight * math.sin(h)
        return AircraftState(x, y, h, v, state.flown_distance_m + step, state.active)

    # HoldHeading
    return AircraftState(state.x_m + step * math.cos(state.heading_rad),
                         state.y_m + step * math.sin(state.heading_rad),
                         state.heading_rad, v,
                         state.flown_distance_m + step, state.active)


def direct_to(state: AircraftState, target: tuple[float, float],
              align_tol_rad: float = math.radians(1.0)) -> GuidanceCommand:
    """Shorter-sense turn toward the bearing of ``target`` (exact ties go clockwise)."""
    dx = target[0] - state.x_m
    dy = target[1] - state.y_m
    if dx * dx + dy * dy < 1e-12:
        return HoldHeading()
    bearing = math.atan2(dy, dx)
    diff = wrap_angle(bearing - state.heading_rad)
    if abs(diff) <= align_tol_rad:
        return HoldHeading()
    sense = CCW if diff > 0 else CW
    if abs(abs(diff) - math.pi) < 1e-12:
        sense = CW
    return TurnToHeading(bearing, sense)
