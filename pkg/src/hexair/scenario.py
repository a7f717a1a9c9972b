"""Combinatorial scenario-set generation.

A mission joins two outer-ring cells at least four links apart.  The
unperturbed set enumerates every unordered choice of four missions with
pairwise-distinct origins, assigning missions to aircraft ids 0..3 in
canonical order (ascending origin, then destination).  The recovery set takes
each unperturbed configuration four times, once per aircraft designated as
the late-entering intruder; this realization yields 4x the base count (the
generator records its rule in output metadata).
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from typing import Iterator, NamedTuple, Optional, Sequence

from .lattice import AirspaceConfig, hex_distance, outer_ring_cells

MIN_MISSION_DISTANCE = 4
DEFAULT_INTRUDER_ENTRY_S = 30.0

RECOVERY_RULE = "unperturbed x intruder-role (4 per base configuration)"


class Mission(NamedTuple):
    origin: int
    destination: int


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: int
    missions: tuple[Mission, Mission, Mission, Mission]
    intruder_index: Optional[int] = None
    intruder_entry_s: float = DEFAULT_INTRUDER_ENTRY_S

    def __post_init__(self) -> None:
        origins = [m.origin for m in self.missions]
        if len(set(origins)) != len(origins):
            raise ValueError("scenario origins must be pairwise distinct")
        if list(self.missions) != sorted(self.missions):
            raise ValueError("missions must be listed in canonical order")


def valid_missions(cfg: AirspaceConfig) -> list[Mission]:
    """All outer-ring origin/destination pairs at hex distance >= 4."""
    outer = outer_ring_cells(cfg)
    out = [Mission(o, d) for o in outer for d in outer
           if hex_distance(o, d, cfg) >= MIN_MISSION_DISTANCE]
    out.sort()
    return out


@lru_cache(maxsize=None)
def _missions_by_origin(radius: int, spacing: float) -> tuple[tuple[int, tuple[int, ...]], ...]:
    cfg = AirspaceConfig(radius, spacing)
    table: dict[int, list[int]] = {}
    for m in valid_missions(cfg):
        table.setdefault(m.origin, []).append(m.destination)
    return tuple((o, tuple(sorted(ds))) for o, ds in sorted(table.items()))


@lru_cache(maxsize=None)
def _subset_blocks(radius: int, spacing: float) -> tuple[tuple[tuple[int, ...], int], ...]:
    """(origin 4-subset, product-of-destination-choices) in lexicographic order."""
    by_origin = dict(_missions_by_origin(radius, spacing))
    origins = sorted(by_origin)
    blocks = []
    for subset in combinations(origins, 4):
        size = 1
        for o in subset:
            size *= len(by_origin[o])
        blocks.append((subset, size))
    return tuple(blocks)


def unperturbed_count(cfg: AirspaceConfig) -> int:
    return sum(size for _, size in _subset_blocks(cfg.radius_rings, cfg.centroid_spacing_m))


def recovery_count(cfg: AirspaceConfig) -> int:
    return 4 * unperturbed_count(cfg)


def unrank_unperturbed(index: int, cfg: AirspaceConfig) -> ScenarioConfig:
    """Scenario for a given enumeration index, without generating the stream."""
    blocks = _subset_blocks(cfg.radius_rings, cfg.centroid_spacing_m)
    by_origin = dict(_missions_by_origin(cfg.radius_rings, cfg.centroid_spacing_m))
    if index < 0:
        raise ValueError(f"scenario index {index} out of range")
    i = index
    for subset, size in blocks:
        if i < size:
            missions = []
            for o in reversed(subset):
                dests = by_origin[o]
                missions.append(Mission(o, dests[i % len(dests)]))
                i //= len(dests)
            missions.reverse()
            return ScenarioConfig(index, tuple(missions), None)
        i -= size
    raise ValueError(f"scenario index {index} out of range")


def unrank_recovery(index: int, cfg: AirspaceConfig) -> ScenarioConfig:
    base = unrank_unperturbed(index // 4, cfg)
    return ScenarioConfig(index, base.missions, index % 4, DEFAULT_INTRUDER_ENTRY_S)


def gen_unperturbed(cfg: AirspaceConfig) -> Iterator[ScenarioConfig]:
    by_origin = dict(_missions_by_origin(cfg.radius_rings, cfg.centroid_spacing_m))
    origins = sorted(by_origin)
    index = 0
    for subset in combinations(origins, 4):
        for dests in product(*(by_origin[o] for o in subset)):
            missions = tuple(Mission(o, d) for o, d in zip(subset, dests))
            yield ScenarioConfig(index, missions, None)
            index += 1


def gen_recovery(cfg: AirspaceConfig) -> Iterator[ScenarioConfig]:
    for base in gen_unperturbed(cfg):
        for k in range(4):
            yield ScenarioConfig(base.scenario_id * 4 + k, base.missions, k,
                                 DEFAULT_INTRUDER_ENTRY_S)


def sample(scenarios: Sequence[ScenarioConfig], k: int, seed: int) -> list[ScenarioConfig]:
    """Seeded subset of size k, stratified evenly across the enumeration order."""
    n = len(scenarios)
    if k > n:
        raise ValueError(f"sample size {k} exceeds set size {n}")
    rng = random.Random(seed)
    picks = []
    for i in range(k):
        lo = (i * n) // k
        hi = ((i + 1) * n) // k
        picks.append(rng.randrange(lo, hi))
    return [scenarios[i] for i in picks]


# --------------------------------------------------------------------------
# scenario-set files

SET_HEADER = ["scenario_id", "o0", "d0", "o1", "d1", "o2", "d2", "o3", "d3",
              "intruder_idx", "intruder_entry_s"]


def write_set_csv(path: str, scenarios: Iterator[ScenarioConfig]) -> int:
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SET_HEADER)
        for sc in scenarios:
            row = [sc.scenario_id]
            for m in sc.missions:
                row.extend((m.origin, m.destination))
            row.append(-1 if sc.intruder_index is None else sc.intruder_index)
            row.append(f"{sc.intruder_entry_s:g}")
            w.writerow(row)
            count += 1
    return count


def read_set_csv(path: str) -> list[ScenarioConfig]:
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != SET_HEADER:
            raise ValueError(f"unrecognized scenario-set header in {path}")
        for row in r:
            sid = int(row[0])
            missions = tuple(Mission(int(row[1 + 2 * i]), int(row[2 + 2 * i]))
                             for i in range(4))
            intruder = int(row[9])
            out.append(ScenarioConfig(
                sid, missions, None if intruder < 0 else intruder, float(row[10])))
    return out
