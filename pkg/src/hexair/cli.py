"""Command-line front end: scenario generation, sweep execution, aggregation, traces.

Exit codes: 0 success, 1 usage error, 2 data error, 3 anomaly threshold
exceeded.  Every numeric threshold can come from a key=value config file or
a flag; flags win.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
import sys
from pathlib import Path
from typing import Optional

import click

from . import __version__, metrics, runio, scenario
from .daa import DaaConfig, dthr_from_nmi
from .engine import EngineConfig, run_scenario
from .kinematics import KinematicLimits
from .lattice import AirspaceConfig
from .scenario import RECOVERY_RULE, ScenarioConfig

METHOD_MODES = {
    "daa": "daa_u",
    "strategic": "strategic_u",
    "collab": "collab_u",
    "daa_rec": "daa_rec",
    "collab_rec": "collab_rec",
}

TRACE_HEADER = ["record", "t_s", "aircraft", "x_m", "y_m", "heading_deg",
                "mode_tag", "cell_index", "other", "min_distance_m"]


class DataError(Exception):
    pass


class AnomalyThresholdError(Exception):
    pass


_CONFIG_KEYS = {
    "dt_integration_s": float, "dt_metric_s": float, "timeout_s": float,
    "excursion_radius_m": float, "hmd_violation_m": float, "astm_los_m": float,
    "capture_radius_m": float, "intruder_retry_s": float,
    "dthr_nmi": float, "lookahead_s": float, "hold_s": float,
    "band_step_deg": float, "max_band_search_deg": float, "band_margin_frac": float,
    "speed_mps": float, "turn_rate_degps": float,
    "radius_rings": int, "centroid_spacing_m": float,
}


def _read_config_file(path: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _CONFIG_KEYS[key](value)
    return out


def build_engine_config(mode: str, settings: dict) -> EngineConfig:
    dthr_m = dthr_from_nmi(settings.get("dthr_nmi", 0.66))
    daa = DaaConfig(
        dthr_m=dthr_m,
        lookahead_s=settings.get("lookahead_s", 110.0),
        hold_s=settings.get("hold_s", 2.0),
        band_step_deg=settings.get("band_step_deg", 1.0),
        max_band_search_deg=settings.get("max_band_search_deg", 180.0),
        band_margin_frac=settings.get("band_margin_frac", 0.05),
    )
    limits = KinematicLimits(
        speed_mps=settings.get("speed_mps", 44.4),
        turn_rate_radps=math.radians(settings.get("turn_rate_degps", 6.5)),
    )
    airspace = AirspaceConfig(
        radius_rings=settings.get("radius_rings", 2),
        centroid_spacing_m=settings.get("centroid_spacing_m", 4000.0),
    )
    kwargs = {k: settings[k] for k in (
        "dt_integration_s", "dt_metric_s", "timeout_s", "excursion_radius_m",
        "hmd_violation_m", "astm_los_m", "capture_radius_m", "intruder_retry_s",
    ) if k in settings}
    return EngineConfig(mode=mode, daa=daa, limits=limits, airspace=airspace, **kwargs)


# -- worker pool -------------------------------------------------------------

_WORKER_EC: Optional[EngineConfig] = None
_WORKER_TRACE_DIR: Optional[str] = None


def _init_worker(ec: EngineConfig, trace_dir: Optional[str]) -> None:
    global _WORKER_EC, _WORKER_TRACE_DIR
    _WORKER_EC = ec
    _WORKER_TRACE_DIR = trace_dir


def _write_trace(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        w.writerows(rows)


def _run_one(sc: ScenarioConfig):
    trace = [] if _WORKER_TRACE_DIR else None
    res = run_scenario(sc, _WORKER_EC, trace)
    if _WORKER_TRACE_DIR:
        _write_trace(Path(_WORKER_TRACE_DIR) / f"trace_{sc.scenario_id}.csv", trace)
    return res


def run_sweep(scenarios: list[ScenarioConfig], ec: EngineConfig, workers: int,
              trace_dir: Optional[str] = None):
    if trace_dir:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    if workers <= 1:
        _init_worker(ec, trace_dir)
        return [_run_one(sc) for sc in scenarios]
    ctx = mp.get_context("fork")
    chunk = max(1, len(scenarios) // (workers * 8))
    with ctx.Pool(workers, initializer=_init_worker, initargs=(ec, trace_dir)) as pool:
        return list(pool.imap(_run_one, scenarios, chunksize=chunk))


# -- commands ----------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def cli() -> None:
    """Hexagonal-cell airspace traffic coordination simulator."""


@cli.command()
@click.option("--set-type", "set_type", type=click.Choice(["unperturbed", "recovery"]),
              required=True)
@click.option("--radius", type=int, default=2, show_default=True)
@click.option("--spacing-m", type=float, default=4000.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def generate(set_type: str, radius: int, spacing_m: float, out_path: str) -> None:
    """Write a scenario-set CSV and print the scenario count."""
    cfg = AirspaceConfig(radius, spacing_m)
    gen = (scenario.gen_unperturbed(cfg) if set_type == "unperturbed"
           else scenario.gen_recovery(cfg))
    count = scenario.write_set_csv(out_path, gen)
    click.echo(f"{count} scenarios -> {out_path}")
    if set_type == "recovery":
        click.echo(f"recovery rule: {RECOVERY_RULE}")


def _load_scenarios(set_path: str, sample_k: Optional[int], seed: Optional[int],
                    limit: Optional[int], cfg: Optional[AirspaceConfig] = None,
                    ) -> list[ScenarioConfig]:
    try:
        rows = scenario.read_set_csv(set_path)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if cfg is not None:
        for sc in rows:
            for m in sc.missions:
                if not (0 <= m.origin < cfg.cell_count and 0 <= m.destination < cfg.cell_count):
                    raise DataError(
                        f"scenario {sc.scenario_id}: cell out of range for "
                        f"radius-{cfg.radius_rings} airspace")
    if sample_k is not None:
        if seed is None:
            raise DataError("--sample-k requires --seed")
        try:
            rows = scenario.sample(rows, sample_k, seed)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    if limit is not None:
        rows = rows[:limit]
    return rows


def _common_run_options(fn):
    fn = click.option("--method", type=click.Choice(sorted(METHOD_MODES)), required=True)(fn)
    fn = click.option("--set", "set_path", type=click.Path(exists=True, dir_okay=False),
                      required=True)(fn)
    fn = click.option("--dthr-nmi", type=float, default=None,
                      help="DAA protection radius in nautical miles (0.66 or 1.0)")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="key=value defaults; flags win")(fn)
    fn = click.option("--timeout-s", type=float, default=None)(fn)
    fn = click.option("--radius", "radius_rings", type=int, default=None)(fn)
    fn = click.option("--spacing-m", "centroid_spacing_m", type=float, default=None)(fn)
    return fn


def _collect_settings(config_path: Optional[str], **flag_values) -> dict:
    settings = _read_config_file(config_path) if config_path else {}
    for key, value in flag_values.items():
        if value is not None:
            settings[key] = value
    return settings


@cli.command(name="run")
@_common_run_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--sample-k", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--limit", type=int, default=None)
@click.option("--trace-dir", type=click.Path(file_okay=False), default=None)
@click.option("--max-anomaly-frac", type=float, default=0.1, show_default=True)
def run_cmd(method: str, set_path: str, dthr_nmi: Optional[float],
            config_path: Optional[str], timeout_s: Optional[float],
            radius_rings: Optional[int], centroid_spacing_m: Optional[float],
            out_path: str, workers: int, sample_k: Optional[int],
            seed: Optional[int], limit: Optional[int], trace_dir: Optional[str],
            max_anomaly_frac: float) -> None:
    """Simulate a scenario set and write one JSON-lines record per scenario."""
    settings = _collect_settings(config_path, dthr_nmi=dthr_nmi, timeout_s=timeout_s,
                                 radius_rings=radius_rings,
                                 centroid_spacing_m=centroid_spacing_m)
    ec = build_engine_config(METHOD_MODES[method], settings)
    rows = _load_scenarios(set_path, sample_k, seed, limit, ec.airspace)
    results = run_sweep(rows, ec, workers, trace_dir)
    manifest = runio.build_manifest(
        method, ec, runio.sha256_file(set_path), sample_k, seed, limit,
        generator_note=RECOVERY_RULE if method.endswith("_rec") else "")
    runio.write_results(out_path, manifest, results)
    anomalies = sum(1 for r in results if r.anomalies)
    click.echo(f"{len(results)} scenarios -> {out_path} ({anomalies} with anomalies)")
    if results and anomalies / len(results) > max_anomaly_frac:
        raise AnomalyThresholdError(
            f"{anomalies}/{len(results)} scenarios recorded anomalies")


@cli.command()
@click.option("--results", "results_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--hist-bin-m", type=float, default=50.0, show_default=True)
def analyze(results_path: str, out_path: str, hist_bin_m: float) -> None:
    """Aggregate a results file into summary statistics."""
    import json
    try:
        manifest, records = runio.read_results(results_path)
    except runio.ResultsFormatError as exc:
        raise DataError(str(exc)) from exc
    ac = manifest["engine_config"]["airspace"]
    cfg = AirspaceConfig(ac["radius_rings"], ac["centroid_spacing_m"])
    try:
        agg = metrics.aggregate((runio.record_to_result(r) for r in records),
                                cfg, hist_bin_m)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = {
        "summary": agg.to_dict(),
        "manifest": manifest,
    }
    Path(out_path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    click.echo(f"aggregated {agg.scenario_count} scenarios -> {out_path}")


@cli.command()
@_common_run_options
@click.option("--scenario-id", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def trace(method: str, set_path: str, dthr_nmi: Optional[float],
          config_path: Optional[str], timeout_s: Optional[float],
          radius_rings: Optional[int], centroid_spacing_m: Optional[float],
          scenario_id: int, out_path: str) -> None:
    """Simulate one scenario and write its trajectory trace CSV."""
    settings = _collect_settings(config_path, dthr_nmi=dthr_nmi, timeout_s=timeout_s,
                                 radius_rings=radius_rings,
                                 centroid_spacing_m=centroid_spacing_m)
    ec = build_engine_config(METHOD_MODES[method], settings)
    rows = _load_scenarios(set_path, None, None, None, ec.airspace)
    match = [sc for sc in rows if sc.scenario_id == scenario_id]
    if not match:
        raise DataError(f"scenario id {scenario_id} not present in {set_path}")
    trace_rows: list = []
    run_scenario(match[0], ec, trace_rows)
    _write_trace(Path(out_path), trace_rows)
    click.echo(f"trace for scenario {scenario_id} -> {out_path}")


def main() -> int:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except AnomalyThresholdError as exc:
        click.echo(f"anomaly threshold exceeded: {exc}", err=True)
        return 3
    except click.exceptions.Abort:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
