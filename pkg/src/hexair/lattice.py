"""Hexagonal-lattice airspace geometry.

Cells are hexagons centred on the vertices of a triangular lattice.  They are
numbered in concentric rings: index 0 is the centre cell, ring r >= 1 starts
at index 1 + 3*r*(r-1) and holds 6*r cells, counted clockwise starting from
the cell directly above the centre.

Cube coordinates (x, y, z with x + y + z = 0) address cells; the Cartesian
embedding puts one neighbour direction straight up (+y) and spaces adjacent
centroids exactly ``centroid_spacing_m`` apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional


class CubeCoord(NamedTuple):
    x: int
    y: int
    z: int


#: The six neighbour directions, clockwise from straight-up; direction k
#: points at angle 90 - 60*k degrees from the +x axis.
DIRECTIONS = (
    CubeCoord(0, 1, -1),
    CubeCoord(1, 0, -1),
    CubeCoord(1, -1, 0),
    CubeCoord(0, -1, 1),
    CubeCoord(-1, 0, 1),
    CubeCoord(-1, 1, 0),
)

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class AirspaceConfig:
    """Lattice extent and scale.

    radius_rings=2 gives the default 19-cell airspace; centroid spacing is
    the distance between adjacent cell centres.
    """

    radius_rings: int = 2
    centroid_spacing_m: float = 4000.0

    def __post_init__(self) -> None:
        if self.radius_rings < 0:
            raise ValueError(f"radius_rings must be >= 0, got {self.radius_rings}")
        if self.centroid_spacing_m <= 0:
            raise ValueError(f"centroid_spacing_m must be > 0, got {self.centroid_spacing_m}")

    @property
    def cell_count(self) -> int:
        r = self.radius_rings
        return 1 + 3 * r * (r + 1)

    @property
    def apothem_m(self) -> float:
        """Distance from a cell centre to the middle of one of its edges."""
        return self.centroid_spacing_m / 2.0


def ring_of(cube: CubeCoord) -> int:
    return max(abs(cube.x), abs(cube.y), abs(cube.z))


def ring_start_index(r: int) -> int:
    return 0 if r == 0 else 1 + 3 * r * (r - 1)


@lru_cache(maxsize=None)
def _cell_tables(radius: int) -> tuple[tuple[CubeCoord, ...], dict[CubeCoord, int]]:
    """Index -> cube and cube -> index tables for a given ring radius."""
    cells: list[CubeCoord] = [CubeCoord(0, 0, 0)]
    for r in range(1, radius + 1):
        pos = CubeCoord(*(r * c for c in DIRECTIONS[0]))
        for k in range(6):
            step = DIRECTIONS[(k + 2) % 6]
            for _ in range(r):
                cells.append(pos)
                pos = CubeCoord(pos.x + step.x, pos.y + step.y, pos.z + step.z)
    by_cube = {c: i for i, c in enumerate(cells)}
    return tuple(cells), by_cube


def cell_to_cube(index: int, cfg: AirspaceConfig) -> CubeCoord:
    cells, _ = _cell_tables(cfg.radius_rings)
    if not 0 <= index < len(cells):
        raise ValueError(f"cell index {index} out of range for {len(cells)}-cell airspace")
    return cells[index]


def cube_to_cell(cube: CubeCoord, cfg: AirspaceConfig) -> int:
    if cube.x + cube.y + cube.z != 0:
        raise ValueError(f"invalid cube coordinate {cube}: components must sum to 0")
    _, by_cube = _cell_tables(cfg.radius_rings)
    try:
        return by_cube[CubeCoord(*cube)]
    except KeyError:
        raise ValueError(f"cube {cube} lies outside the {cfg.radius_rings}-ring airspace") from None


def _cube_to_xy(cube: CubeCoord, spacing: float) -> tuple[float, float]:
    return (spacing * (SQRT3 / 2.0) * cube.x, spacing * (0.5 * cube.x + cube.y))


def centroid(index: int, cfg: AirspaceConfig) -> tuple[float, float]:
    return _cube_to_xy(cell_to_cube(index, cfg), cfg.centroid_spacing_m)


def neighbors(index: int, cfg: AirspaceConfig) -> list[int]:
    """In-airspace neighbours of a cell, ascending by index."""
    cube = cell_to_cube(index, cfg)
    _, by_cube = _cell_tables(cfg.radius_rings)
    out = []
    for d in DIRECTIONS:
        nb = CubeCoord(cube.x + d.x, cube.y + d.y, cube.z + d.z)
        i = by_cube.get(nb)
        if i is not None:
            out.append(i)
    out.sort()
    return out


def hex_distance(a: int, b: int, cfg: AirspaceConfig) -> int:
    ca = cell_to_cube(a, cfg)
    cb = cell_to_cube(b, cfg)
    return (abs(ca.x - cb.x) + abs(ca.y - cb.y) + abs(ca.z - cb.z)) // 2


def outer_ring_cells(cfg: AirspaceConfig) -> list[int]:
    r = cfg.radius_rings
    return list(range(ring_start_index(r), cfg.cell_count))


def is_corner_cell(index: int, cfg: AirspaceConfig) -> bool:
    """Outer-ring cells at the six hexagon corners (offset 0 mod r within the ring)."""
    cube = cell_to_cube(index, cfg)
    r = ring_of(cube)
    if r == 0 or r != cfg.radius_rings:
        return False
    return (index - ring_start_index(r)) % r == 0


def _cube_round(fx: float, fy: float, fz: float) -> CubeCoord:
    rx, ry, rz = round(fx), round(fy), round(fz)
    dx, dy, dz = abs(rx - fx), abs(ry - fy), abs(rz - fz)
    if dx > dy and dx > dz:
        rx = -ry - rz
    elif dy > dz:
        ry = -rx - rz
    else:
        rz = -rx - ry
    return CubeCoord(int(rx), int(ry), int(rz))


def locate(p: tuple[float, float], cfg: AirspaceConfig) -> Optional[int]:
    """Cell containing point ``p``, or None when outside the airspace.

    Boundary ties between in-airspace cells go to the lower index; a point on
    the outer border still belongs to its airspace cell.
    """
    s = cfg.centroid_spacing_m
    fx = 2.0 * p[0] / (s * SQRT3)
    fy = p[1] / s - 0.5 * fx
    fz = -fx - fy
    home = _cube_round(fx, fy, fz)
    _, by_cube = _cell_tables(cfg.radius_rings)
    eps = 1e-6 * s

    candidates = [home] + [
        CubeCoord(home.x + d.x, home.y + d.y, home.z + d.z) for d in DIRECTIONS
    ]
    best_d = math.inf
    dists = []
    for cube in candidates:
        cx, cy = _cube_to_xy(cube, s)
        d = math.hypot(p[0] - cx, p[1] - cy)
        dists.append(d)
        if d < best_d:
            best_d = d

    best_inside: Optional[int] = None
    for cube, d in zip(candidates, dists):
        if d <= best_d + eps:
            i = by_cube.get(cube)
            if i is not None and (best_inside is None or i < best_inside):
                best_inside = i
    return best_inside


def point_in_cell(p: tuple[float, float], index: int, cfg: AirspaceConfig,
                  slack_m: float = 0.0) -> bool:
    """Whether ``p`` lies in cell ``index``'s hexagon (infinite-lattice Voronoi test).

    ``slack_m`` loosens the test: points up to slack_m closer to a neighbour
    centroid still pass.  Used for containment checks of planned paths.
    """
    s = cfg.centroid_spacing_m
    cube = cell_to_cube(index, cfg)
    cx, cy = _cube_to_xy(cube, s)
    d0 = math.hypot(p[0] - cx, p[1] - cy)
    for d in DIRECTIONS:
        nb = CubeCoord(cube.x + d.x, cube.y + d.y, cube.z + d.z)
        nx, ny = _cube_to_xy(nb, s)
        if math.hypot(p[0] - nx, p[1] - ny) < d0 - slack_m - 1e-9:
            return False
    return True
