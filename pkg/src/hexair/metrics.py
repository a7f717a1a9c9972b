"""Per-scenario and sweep-level statistics.

Extra distance compares what an aircraft actually flew against its unimpeded
straight line; equity is the sample standard deviation of extra distance
across the aircraft of one scenario.  Sweep aggregation is a pure fold with
an associative merge, so partitioned runs can be combined freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .engine import AircraftResult, ScenarioResult
from .lattice import AirspaceConfig, centroid

EVENT_RATE_KEYS = ("hmd_violation", "astm_los", "excursion", "timeout")


def unimpeded_distance(origin: int, destination: int, cfg: AirspaceConfig) -> float:
    ox, oy = centroid(origin, cfg)
    dx, dy = centroid(destination, cfg)
    return math.hypot(dx - ox, dy - oy)


def extra_distance(aircraft: AircraftResult, cfg: AirspaceConfig) -> Optional[float]:
    """Flown distance beyond the straight origin-destination line.

    Unfinished aircraft yield None (flagged and excluded from means: a timed
    out aircraft would otherwise contribute an unbounded penalty).
    """
    if not aircraft.finished:
        return None
    return aircraft.flown_distance_m - unimpeded_distance(
        aircraft.origin, aircraft.destination, cfg)


def equity_std(extras: list[float]) -> Optional[float]:
    """Sample standard deviation (n-1 denominator); None below two values."""
    vals = [e for e in extras if e is not None]
    n = len(vals)
    if n < 2:
        return None
    mean = sum(vals) / n
    return math.sqrt(sum((v - mean) ** 2 for v in vals) / (n - 1))


@dataclass
class AggregateStats:
    scenario_count: int = 0
    mean_actual_hmd_m: Optional[float] = None
    min_actual_hmd_m: Optional[float] = None
    rate_hmd_violation: float = 0.0
    rate_astm_los: float = 0.0
    rate_excursion: float = 0.0
    rate_timeout: float = 0.0
    mean_extra_distance_m: Optional[float] = None
    mean_equity_std_m: Optional[float] = None
    hmd_histogram: list[tuple[float, float, int]] = field(default_factory=list)
    hist_bin_m: float = 50.0
    flagged_unfinished: int = 0

    # internal accumulators for exact merging
    _hmd_sum: float = 0.0
    _hmd_n: int = 0
    _event_counts: dict = field(default_factory=lambda: {k: 0 for k in EVENT_RATE_KEYS})
    _extra_sum: float = 0.0
    _extra_n: int = 0
    _equity_sum: float = 0.0
    _equity_n: int = 0
    _hist_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario_count": self.scenario_count,
            "mean_actual_hmd_m": self.mean_actual_hmd_m,
            "min_actual_hmd_m": self.min_actual_hmd_m,
            "rate_hmd_violation": self.rate_hmd_violation,
            "rate_astm_los": self.rate_astm_los,
            "rate_excursion": self.rate_excursion,
            "rate_timeout": self.rate_timeout,
            "mean_extra_distance_m": self.mean_extra_distance_m,
            "mean_equity_std_m": self.mean_equity_std_m,
            "hmd_histogram": [[lo, hi, n] for lo, hi, n in self.hmd_histogram],
            "hist_bin_m": self.hist_bin_m,
            "flagged_unfinished": self.flagged_unfinished,
        }


def _finalize(agg: AggregateStats) -> AggregateStats:
    n = agg.scenario_count
    if n:
        for key, attr in (("hmd_violation", "rate_hmd_violation"),
                          ("astm_los", "rate_astm_los"),
                          ("excursion", "rate_excursion"),
                          ("timeout", "rate_timeout")):
            setattr(agg, attr, agg._event_counts[key] / n)
    agg.mean_actual_hmd_m = agg._hmd_sum / agg._hmd_n if agg._hmd_n else None
    agg.mean_extra_distance_m = agg._extra_sum / agg._extra_n if agg._extra_n else None
    agg.mean_equity_std_m = agg._equity_sum / agg._equity_n if agg._equity_n else None
    if agg._hist_counts:
        top = max(agg._hist_counts)
        agg.hmd_histogram = [
            (i * agg.hist_bin_m, (i + 1) * agg.hist_bin_m, agg._hist_counts.get(i, 0))
            for i in range(top + 1)]
    else:
        agg.hmd_histogram = []
    return agg


def accumulate(agg: AggregateStats, result: ScenarioResult, cfg: AirspaceConfig) -> None:
    agg.scenario_count += 1
    events = set(result.events)
    for key in EVENT_RATE_KEYS:
        if key in events:
            agg._event_counts[key] += 1
    if result.actual_hmd_m is not None:
        agg._hmd_sum += result.actual_hmd_m
        agg._hmd_n += 1
        if agg.min_actual_hmd_m is None or result.actual_hmd_m < agg.min_actual_hmd_m:
            agg.min_actual_hmd_m = result.actual_hmd_m
        b = int(result.actual_hmd_m // agg.hist_bin_m)
        agg._hist_counts[b] = agg._hist_counts.get(b, 0) + 1
    extras = []
    for a in result.aircraft:
        e = extra_distance(a, cfg)
        if e is None:
            agg.flagged_unfinished += 1
        else:
            extras.append(e)
    if extras:
        agg._extra_sum += sum(extras) / len(extras)
        agg._extra_n += 1
    eq = equity_std(extras)
    if eq is not None:
        agg._equity_sum += eq
        agg._equity_n += 1


def aggregate(results: Iterable[ScenarioResult], cfg: AirspaceConfig,
              bin_width_m: float = 50.0) -> AggregateStats:
    agg = AggregateStats(hist_bin_m=bin_width_m)
    empty = True
    for r in results:
        empty = False
        accumulate(agg, r, cfg)
    if empty:
        raise ValueError("cannot aggregate an empty result stream")
    return _finalize(agg)


def merge(a: AggregateStats, b: AggregateStats) -> AggregateStats:
    """Combine two partial aggregates (same bin width) into one."""
    if abs(a.hist_bin_m - b.hist_bin_m) > 1e-9:
        raise ValueError("cannot merge aggregates with different histogram bins")
    out = AggregateStats(hist_bin_m=a.hist_bin_m)
    out.scenario_count = a.scenario_count + b.scenario_count
    out._hmd_sum = a._hmd_sum + b._hmd_sum
    out._hmd_n = a._hmd_n + b._hmd_n
    mins = [m for m in (a.min_actual_hmd_m, b.min_actual_hmd_m) if m is not None]
    out.min_actual_hmd_m = min(mins) if mins else None
    out._event_counts = {k: a._event_counts[k] + b._event_counts[k]
                         for k in EVENT_RATE_KEYS}
    out._extra_sum = a._extra_sum + b._extra_sum
    out._extra_n = a._extra_n + b._extra_n
    out._equity_sum = a._equity_sum + b._equity_sum
    out._equity_n = a._equity_n + b._equity_n
    keys = set(a._hist_counts) | set(b._hist_counts)
    out._hist_counts = {k: a._hist_counts.get(k, 0) + b._hist_counts.get(k, 0)
                        for k in keys}
    out.flagged_unfinished = a.flagged_unfinished + b.flagged_unfinished
    return _finalize(out)
