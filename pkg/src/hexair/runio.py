"""Results-file serialization: JSON-lines records bracketed by a manifest and a digest trailer.

A results file carries one manifest line (config echo + input digest), one
line per scenario sorted by id, and an end line with the record count and a
SHA-256 over the record bytes.  Re-running with any worker split produces a
byte-identical file; `analyze` refuses files whose trailer or manifest lines
do not check out.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Optional

from . import __version__
from .engine import AircraftResult, CpaRecord, EngineConfig, ScenarioResult


class ResultsFormatError(ValueError):
    """The results file is malformed, truncated, or internally inconsistent."""


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_to_dict(ec: EngineConfig) -> dict:
    return dataclasses.asdict(ec)


def build_manifest(method: str, ec: EngineConfig, set_digest: str,
                   sample_k: Optional[int], seed: Optional[int],
                   limit: Optional[int], generator_note: str = "") -> dict:
    return {
        "record": "manifest",
        "tool": "hexair",
        "version": __version__,
        "method": method,
        "set_sha256": set_digest,
        "engine_config": config_to_dict(ec),
        "sample_k": sample_k,
        "seed": seed,
        "limit": limit,
        "generator_note": generator_note,
    }


def result_to_record(res: ScenarioResult) -> dict:
    aircraft = []
    for a in res.aircraft:
        cpa = None
        if a.cpa is not None:
            cpa = {
                "other": a.cpa.other,
                "min_distance_m": a.cpa.min_distance_m,
                "t_s": a.cpa.t_s,
                "own_x_m": a.cpa.own_position[0],
                "own_y_m": a.cpa.own_position[1],
                "other_x_m": a.cpa.other_position[0],
                "other_y_m": a.cpa.other_position[1],
            }
        aircraft.append({
            "aircraft": a.aircraft,
            "origin": a.origin,
            "destination": a.destination,
            "entered": a.entered,
            "finished": a.finished,
            "flight_time_s": a.flight_time_s,
            "flown_distance_m": a.flown_distance_m,
            "cpa": cpa,
        })
    return {
        "record": "scenario",
        "scenario_id": res.scenario_id,
        "mode": res.mode,
        "aircraft": aircraft,
        "actual_hmd_m": res.actual_hmd_m,
        "events": res.events,
        "anomalies": res.anomalies,
    }


def record_to_result(rec: dict) -> ScenarioResult:
    aircraft = []
    for a in rec["aircraft"]:
        cpa = None
        if a["cpa"] is not None:
            c = a["cpa"]
            cpa = CpaRecord(a["aircraft"], c["other"], c["min_distance_m"], c["t_s"],
                            (c["own_x_m"], c["own_y_m"]),
                            (c["other_x_m"], c["other_y_m"]))
        aircraft.append(AircraftResult(
            a["aircraft"], a["origin"], a["destination"], a["entered"],
            a["finished"], a["flight_time_s"], a["flown_distance_m"], cpa))
    return ScenarioResult(rec["scenario_id"], rec["mode"], aircraft,
                          rec["actual_hmd_m"], rec["events"], rec["anomalies"])


def write_results(path: str, manifest: dict, results: list[ScenarioResult]) -> None:
    results = sorted(results, key=lambda r: r.scenario_id)
    payload = hashlib.sha256()
    with open(path, "w") as fh:
        fh.write(_json_line(manifest))
        for res in results:
            line = _json_line(result_to_record(res))
            payload.update(line.encode())
            fh.write(line)
        fh.write(_json_line({
            "record": "end",
            "count": len(results),
            "payload_sha256": payload.hexdigest(),
        }))


def read_results(path: str) -> tuple[dict, list[dict]]:
    """Parse and verify a results file; returns (manifest, scenario records)."""
    manifest: Optional[dict] = None
    records: list[dict] = []
    end: Optional[dict] = None
    payload = hashlib.sha256()
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "manifest":
                if manifest is not None and rec != manifest:
                    raise ResultsFormatError(f"{path}: mixed manifests")
                manifest = rec
            elif kind == "scenario":
                payload.update(line.encode() if line.endswith("\n")
                               else (line + "\n").encode())
                records.append(rec)
            elif kind == "end":
                end = rec
            else:
                raise ResultsFormatError(f"{path}: unknown record kind {kind!r}")
    if manifest is None:
        raise ResultsFormatError(f"{path}: missing manifest record")
    if end is None:
        raise ResultsFormatError(f"{path}: missing end record (truncated file?)")
    if end["count"] != len(records):
        raise ResultsFormatError(
            f"{path}: record count {len(records)} != declared {end['count']}")
    if end["payload_sha256"] != payload.hexdigest():
        raise ResultsFormatError(f"{path}: payload digest mismatch")
    return manifest, records
