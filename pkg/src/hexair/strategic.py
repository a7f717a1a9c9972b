"""Exact strategic airspace allocation over a time-expanded cell graph.

Aircraft move synchronously, one cell per step, one aircraft per cell per
step, no swaps across a shared border, no holding in place (fixed-wing
aircraft cannot hover).  The solver returns a plan minimizing the sum of
arrival steps and is exact: independent aircraft keep their shortest paths,
and conflicting aircraft are merged into groups solved jointly by A* with an
admissible distance heuristic.  Group solutions are each individually
optimal, so when no cross-group conflicts remain the combined objective
equals the global optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

from .lattice import AirspaceConfig, hex_distance, neighbors


class AllocationInfeasible(Exception):
    """No conflict-free plan exists within the step horizon."""


@dataclass(frozen=True)
class AllocationProblem:
    airspace: AirspaceConfig
    missions: tuple[tuple[int, int, int], ...]  # (aircraft id, origin, destination)
    horizon_steps: Optional[int] = None

    def __post_init__(self) -> None:
        origins = [o for _, o, _ in self.missions]
        if len(set(origins)) != len(origins):
            raise ValueError("mission origins must be pairwise distinct")

    @property
    def horizon(self) -> int:
        if self.horizon_steps is not None:
            return self.horizon_steps
        worst = max((hex_distance(o, d, self.airspace) for _, o, d in self.missions),
                    default=0)
        return worst + 8


@dataclass(frozen=True)
class OccupancyPlan:
    paths: dict[int, tuple[int, ...]]  # aircraft id -> cells at steps 0,1,...
    objective: int                     # sum of arrival steps


@lru_cache(maxsize=None)
def _adjacency(radius: int, spacing: float) -> tuple[tuple[int, ...], ...]:
    cfg = AirspaceConfig(radius, spacing)
    return tuple(tuple(neighbors(i, cfg)) for i in range(cfg.cell_count))


@lru_cache(maxsize=None)
def _dist_table(radius: int, spacing: float, dest: int) -> tuple[int, ...]:
    """BFS distance to ``dest`` over the in-airspace neighbour graph."""
    adj = _adjacency(radius, spacing)
    dist = [-1] * len(adj)
    dist[dest] = 0
    frontier = [dest]
    while frontier:
        nxt = []
        for c in frontier:
            for nb in adj[c]:
                if dist[nb] < 0:
                    dist[nb] = dist[c] + 1
                    nxt.append(nb)
        frontier = nxt
    return tuple(dist)


def _canonical_shortest_path(origin: int, dest: int, cfg: AirspaceConfig) -> tuple[int, ...]:
    """Greedy descent on distance-to-destination, ties to the lowest cell index."""
    adj = _adjacency(cfg.radius_rings, cfg.centroid_spacing_m)
    dist = _dist_table(cfg.radius_rings, cfg.centroid_spacing_m, dest)
    path = [origin]
    cur = origin
    while cur != dest:
        cur = min((nb for nb in adj[cur] if dist[nb] == dist[cur] - 1))
        path.append(cur)
    return tuple(path)


def _conflicts(paths: Sequence[tuple[int, ...]]) -> bool:
    """Vertex or swap conflict between any two synchronized paths (vanish on arrival)."""
    horizon = max(len(p) for p in paths)
    for step in range(horizon):
        occupied: dict[int, int] = {}
        for i, p in enumerate(paths):
            if step < len(p):
                cell = p[step]
                if cell in occupied:
                    return True
                occupied[cell] = i
        for i, p in enumerate(paths):
            for j in range(i + 1, len(paths)):
                q = paths[j]
                if step + 1 < len(p) and step + 1 < len(q):
                    if p[step + 1] == q[step] and q[step + 1] == p[step]:
                        return True
    return False


def _joint_astar(members: Sequence[tuple[int, int, int]], cfg: AirspaceConfig,
                 horizon: int) -> list[tuple[int, ...]]:
    """Optimal joint plan for one conflict group; cost = sum of arrival steps."""
    adj = _adjacency(cfg.radius_rings, cfg.centroid_spacing_m)
    dists = [_dist_table(cfg.radius_rings, cfg.centroid_spacing_m, d)
             for _, _, d in members]
    dests = [d for _, _, d in members]
    n = len(members)

    start = tuple(-1 if o == d else o for _, o, d in members)
    arrived_at_start = {i: 0 for i, (_, o, d) in enumerate(members) if o == d}

    def h(cells: tuple[int, ...]) -> int:
        total = 0
        for i, c in enumerate(cells):
            if c >= 0:
                total += dists[i][c]
        return total

    # state: (cells, step); cells entry -1 once arrived
    start_state = (start, 0)
    g_best = {start_state: 0}
    parent: dict[tuple, tuple] = {}
    open_heap: list[tuple[int, int, tuple[int, ...], int]] = []
    heapq.heappush(open_heap, (h(start), h(start), start, 0))

    goal_state = None
    while open_heap:
        f, _, cells, step = heapq.heappop(open_heap)
        state = (cells, step)
        g = g_best.get(state)
        if g is None or f > g + h(cells):
            continue
        if all(c < 0 for c in cells):
            goal_state = state
            break
        if step >= horizon:
            continue

        active = [i for i in range(n) if cells[i] >= 0]
        move_cost = len(active)

        # depth-first product of per-aircraft moves with incremental conflict checks
        options = [adj[cells[i]] for i in active]
        chosen: list[int] = []

        def emit(newcells: tuple[int, ...]) -> None:
            ns = (newcells, step + 1)
            ng = g + move_cost
            old = g_best.get(ns)
            if old is None or ng < old:
                g_best[ns] = ng
                parent[ns] = state
                heapq.heappush(open_heap, (ng + h(newcells), h(newcells), newcells, step + 1))

        def rec(k: int) -> None:
            if k == len(active):
                out = list(cells)
                for idx, mv in zip(active, chosen):
                    out[idx] = -1 if mv == dests[idx] else mv
                emit(tuple(out))
                return
            i = active[k]
            for nb in options[k]:
                clash = False
                for kk in range(k):
                    j = active[kk]
                    if chosen[kk] == nb:
                        clash = True
                        break
                    if chosen[kk] == cells[i] and cells[j] == nb:
                        clash = True
                        break
                if clash:
                    continue
                chosen.append(nb)
                rec(k + 1)
                chosen.pop()

        rec(0)

    if goal_state is None:
        raise AllocationInfeasible(
            f"no joint plan within {horizon} steps for aircraft "
            f"{[m[0] for m in members]}")

    # walk parents back to recover per-aircraft paths
    states = [goal_state]
    while states[-1] in parent:
        states.append(parent[states[-1]])
    states.reverse()

    paths: list[list[int]] = [[] for _ in range(n)]
    done = [False] * n
    for i, (_, o, d) in enumerate(members):
        paths[i].append(o)
        if i in arrived_at_start:
            done[i] = True
    for (prev_cells, _), (cells, _) in zip(states, states[1:]):
        for i in range(n):
            if done[i]:
                continue
            c = cells[i]
            if c >= 0:
                paths[i].append(c)
            else:
                paths[i].append(dests[i])
                done[i] = True
    return [tuple(p) for p in paths]


def solve(problem: AllocationProblem) -> OccupancyPlan:
    """Minimum total-flight-time conflict-free occupancy plan.

    Raises AllocationInfeasible when no plan fits the horizon; never falls
    back silently.
    """
    cfg = problem.airspace
    horizon = problem.horizon
    missions = sorted(problem.missions)
    ids = [aid for aid, _, _ in missions]

    for _, o, d in missions:
        if hex_distance(o, d, cfg) > horizon:
            raise AllocationInfeasible("mission distance exceeds horizon")

    groups: list[list[int]] = [[i] for i in range(len(missions))]
    plans: dict[int, list[tuple[int, ...]]] = {
        gi: [_canonical_shortest_path(o, d, cfg)]
        for gi, (_, o, d) in enumerate(missions)
    }

    def group_of(idx: int) -> int:
        for gi, g in enumerate(groups):
            if idx in g:
                return gi
        raise KeyError(idx)

    while True:
        flat_paths = {}
        for gi, g in enumerate(groups):
            for pos, idx in enumerate(g):
                flat_paths[idx] = plans[gi][pos]
        clash = None
        order = sorted(flat_paths)
        for a_i in range(len(order)):
            for b_i in range(a_i + 1, len(order)):
                i, j = order[a_i], order[b_i]
                if group_of(i) != group_of(j) and _conflicts([flat_paths[i], flat_paths[j]]):
                    clash = (i, j)
                    break
            if clash:
                break
        if clash is None:
            break
        gi, gj = group_of(clash[0]), group_of(clash[1])
        merged = sorted(groups[gi] + groups[gj])
        groups = [g for k, g in enumerate(groups) if k not in (gi, gj)]
        groups.append(merged)
        plans = {}
        for k, g in enumerate(groups):
            if len(g) == 1:
                _, o, d = missions[g[0]]
                plans[k] = [_canonical_shortest_path(o, d, cfg)]
            else:
                plans[k] = _joint_astar([missions[i] for i in g], cfg, horizon)

    paths = {}
    for gi, g in enumerate(groups):
        for pos, idx in enumerate(g):
            paths[ids[idx]] = plans[gi][pos]
    objective = sum(len(p) - 1 for p in paths.values())
    return OccupancyPlan(paths, objective)


def validate_plan(plan: OccupancyPlan, problem: AllocationProblem) -> list[str]:
    """All occupancy-plan invariants; returns human-readable violations."""
    cfg = problem.airspace
    out: list[str] = []
    by_id = {aid: (o, d) for aid, o, d in problem.missions}
    if set(plan.paths) != set(by_id):
        out.append("plan aircraft set differs from problem missions")
        return out

    for aid, path in sorted(plan.paths.items()):
        o, d = by_id[aid]
        if not path or path[0] != o:
            out.append(f"aircraft {aid}: path does not start at origin")
        if not path or path[-1] != d:
            out.append(f"aircraft {aid}: path does not end at destination")
        for k in range(len(path) - 1):
            if hex_distance(path[k], path[k + 1], cfg) != 1:
                out.append(f"aircraft {aid}: step {k} move is not to a neighbour")
            if path[k] == d:
                out.append(f"aircraft {aid}: transits its destination at step {k}")

    horizon = max((len(p) for p in plan.paths.values()), default=0)
    items = sorted(plan.paths.items())
    for step in range(horizon):
        seen: dict[int, int] = {}
        for aid, path in items:
            if step < len(path):
                cell = path[step]
                if cell in seen:
                    out.append(f"occupancy clash: cell {cell} at step {step} "
                               f"(aircraft {seen[cell]} and {aid})")
                else:
                    seen[cell] = aid
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                a_id, p = items[i]
                b_id, q = items[j]
                if step + 1 < len(p) and step + 1 < len(q):
                    if p[step + 1] == q[step] and q[step + 1] == p[step]:
                        out.append(f"swap between aircraft {a_id} and {b_id} at step {step}")

    want = sum(len(p) - 1 for p in plan.paths.values())
    if plan.objective != want:
        out.append(f"objective {plan.objective} != sum of arrival steps {want}")
    return out


def plan_to_waypoints(plan: OccupancyPlan, cfg: AirspaceConfig) -> dict[int, list[tuple[float, float]]]:
    from .lattice import centroid
    return {aid: [centroid(c, cfg) for c in path]
            for aid, path in sorted(plan.paths.items())}
