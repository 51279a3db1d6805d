"""Batch orchestration of the per-station analysis and the spatial mapping step."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ElmSettings, PipelineConfig
from .distfit import rank_distributions
from .elm import ElmError, predict_grid, select_hidden_nodes, train_elm
from .manifest import MANIFEST_NAME, RunManifest
from .mfdfa import analyze
from .stl import StlConfig, stl_decompose
from .surrogate import significance, surrogate_ensemble
from .timeseries import (
    CsvSchema,
    IngestError,
    StationMeta,
    TimeSeries,
    aggregate_daily_mean,
    load_station_catalog,
    load_station_csv,
)
from .writers import OutputWriter, mfdfa_document

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ALL_FAILED = 2

SUMMARY_COLUMNS = [
    "station_id",
    "H",
    "H_stderr",
    "W",
    "A",
    "delta_h",
    "H_shuffled_mean",
    "H_shuffled_std",
    "W_shuffled_mean",
    "W_shuffled_std",
    "A_shuffled_mean",
    "A_shuffled_std",
    "z_H",
    "z_W",
    "z_A",
    "best_family",
]

# (low, high, step) of the fixed histogram bins per parameter
HISTOGRAM_BINS = {
    "H": (0.4, 1.0, 0.025),
    "W": (0.0, 1.3, 0.05),
    "A": (0.0, 5.0, 0.2),
}

STAGES = ("decompose", "fit-dist", "mfdfa", "surrogate")
DECOMPOSING_STAGES = frozenset({"decompose", "mfdfa", "surrogate"})

MAPPED_PARAMETERS = (
    "H",
    "W",
    "A",
    "H_shuffled_mean",
    "W_shuffled_mean",
    "A_shuffled_mean",
)


@dataclass
class StationResult:
    """Outcome of one station job."""

    station_id: str
    status: str
    files: list[Path] = field(default_factory=list)
    row: dict | None = None
    error: str | None = None


@dataclass
class PipelineOutcome:
    """Exit status and manifest of a run."""

    exit_code: int
    manifest: RunManifest
    results: list[StationResult]
    changes: dict[str, list[str]] | None = None


def load_daily_series(path: Path, schema: CsvSchema, min_coverage: float) -> TimeSeries:
    """Read one station file and aggregate it to daily means."""
    batch = load_station_csv(path, schema)
    return aggregate_daily_mean(batch, min_coverage)


def analysis_input(ts: TimeSeries, stl_cfg: StlConfig | None):
    """Series handed to MFDFA: the STL remainder, or the series itself without STL."""
    if stl_cfg is None:
        return ts, None
    decomposition = stl_decompose(ts, stl_cfg)
    return ts.with_values(decomposition.remainder), decomposition


def summary_row(station_id: str, summary, report, best_family: str | None) -> dict:
    row = {
        "station_id": station_id,
        "H": summary.H,
        "H_stderr": summary.H_stderr,
        "W": summary.W,
        "A": summary.A,
        "delta_h": summary.delta_h,
        "best_family": best_family,
    }
    if report is not None:
        for name, parameter in report.parameters.items():
            row[f"{name}_shuffled_mean"] = parameter.mean
            row[f"{name}_shuffled_std"] = parameter.std
            row[f"z_{name}"] = parameter.z
    return row


def process_station(
    path: Path, cfg: PipelineConfig, stages: tuple[str, ...] = STAGES
) -> StationResult:
    """Run the requested analysis stages for one station file.

    Every failure is caught and returned as a failed result, so one bad station never
    stops the batch.
    """
    station_id = Path(path).stem
    writer = OutputWriter(cfg.output_dir / "stations" / station_id)
    try:
        ts = load_daily_series(path, cfg.csv, cfg.min_coverage)
        writer.write_gap_report("gaps.jsonl", ts.gaps)

        best_family = None
        if "fit-dist" in stages:
            ranking = rank_distributions(ts)
            writer.write_json("fit_dist.json", ranking.to_dict())
            best_family = ranking.best_family

        if not DECOMPOSING_STAGES & set(stages):
            return StationResult(station_id=station_id, status="ok", files=writer.written)

        series, decomposition = analysis_input(ts, cfg.stl if cfg.stl_enabled else None)
        if decomposition is not None and "decompose" in stages:
            writer.write_decomposition("decomposition.csv", ts, decomposition)
            writer.write_series("remainder.csv", series, cfg.csv.value_column)

        if not {"mfdfa", "surrogate"} & set(stages):
            return StationResult(station_id=station_id, status="ok", files=writer.written)

        result = analyze(series, cfg.mfdfa)
        if "mfdfa" in stages:
            writer.write_json("mfdfa.json", mfdfa_document(station_id, result, cfg.mfdfa))
            surface = result.surface
            writer.write_matrix(
                "fluctuation.csv", "q", surface.q_grid, surface.scales, surface.values
            )

        report = None
        if "surrogate" in stages:
            ensemble = surrogate_ensemble(
                series, cfg.mfdfa, cfg.n_surrogates, cfg.base_seed, original=result.summary
            )
            report = significance(ensemble)
            writer.write_json("surrogate.json", report.to_dict())

        row = summary_row(station_id, result.summary, report, best_family)
        logger.info(
            f"Station {station_id} done: H={row['H']:.4f} W={row['W']:.4f} A={row['A']:.4f}"
        )
        return StationResult(station_id=station_id, status="ok", files=writer.written, row=row)
    except Exception as e:
        logger.error(f"Station {station_id} failed: {e}", exc_info=True)
        return StationResult(
            station_id=station_id, status="failed", files=writer.written, error=str(e)
        )


def run_stations(
    files: list[Path], cfg: PipelineConfig, stages: tuple[str, ...] = STAGES
) -> list[StationResult]:
    """Station jobs, up to cfg.jobs at a time; results come back sorted by station id."""
    if cfg.jobs == 1 or len(files) == 1:
        results = [process_station(path, cfg, stages) for path in files]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            n = len(files)
            results = list(pool.map(process_station, files, [cfg] * n, [stages] * n))
    return sorted(results, key=lambda r: r.station_id)


def exit_status(results: list[StationResult]) -> int:
    if results and all(r.status != "ok" for r in results):
        logger.error("Every station failed")
        return EXIT_ALL_FAILED
    return EXIT_OK


def _bin_edges(low: float, high: float, step: float) -> np.ndarray:
    n_bins = int(round((high - low) / step))
    return low + step * np.arange(n_bins + 1)


def emit_histograms(rows: list[dict]) -> list[dict]:
    """Fixed-bin counts of H, W and A for the original and shuffled-mean values.

    Values outside a parameter's range are counted in the nearest edge bin.
    """
    if not rows:
        raise ValueError("Histograms need at least one station row")

    records = []
    for name, (low, high, step) in HISTOGRAM_BINS.items():
        edges = _bin_edges(low, high, step)
        for source, column in (("original", name), ("shuffled_mean", f"{name}_shuffled_mean")):
            values = np.array(
                [r[column] for r in rows if r.get(column) is not None], dtype=float
            )
            values = values[np.isfinite(values)]
            clipped = np.clip(values, edges[0], edges[-1])
            counts, _ = np.histogram(clipped, bins=edges)
            for i, count in enumerate(counts):
                records.append(
                    {
                        "parameter": name,
                        "source": source,
                        "bin_low": round(float(edges[i]), 10),
                        "bin_high": round(float(edges[i + 1]), 10),
                        "count": int(count),
                    }
                )
    return records


def default_bbox(
    catalog: dict[str, StationMeta], resolution: float
) -> tuple[float, float, float, float]:
    """Station extent padded by one cell on every side."""
    xs = [m.x for m in catalog.values()]
    ys = [m.y for m in catalog.values()]
    return (
        min(xs) - resolution,
        min(ys) - resolution,
        max(xs) + resolution,
        max(ys) + resolution,
    )


def map_parameters(
    rows: list[dict],
    catalog: dict[str, StationMeta],
    settings: ElmSettings,
    writer: OutputWriter,
) -> dict:
    """Train one ELM per parameter on station coordinates and write its grid.

    The hidden-node count is chosen on a holdout split; the mapped model is then
    retrained on every station with that count.

    Returns:
        Sidecar document with model metadata and holdout scores per parameter
    """
    located = [r for r in rows if r["station_id"] in catalog]
    missing = sorted({r["station_id"] for r in rows} - set(catalog))
    if missing:
        logger.warning(f"No coordinates for stations {missing}; they are not mapped")
    if not located:
        raise ElmError("No station in the summary has catalog coordinates")

    bbox = settings.bbox or default_bbox(catalog, settings.resolution)
    sidecar = {"bbox": list(bbox), "resolution": settings.resolution, "parameters": {}}
    for name in MAPPED_PARAMETERS:
        usable = [r for r in located if r.get(name) is not None and np.isfinite(r[name])]
        if len(usable) < 3:
            logger.warning(f"Skipping map of {name}: {len(usable)} stations with values")
            continue
        X = np.array([[catalog[r["station_id"]].x, catalog[r["station_id"]].y] for r in usable])
        y = np.array([r[name] for r in usable], dtype=float)
        try:
            selection = select_hidden_nodes(
                X, y, settings.candidates, settings.holdout_fraction, settings.seed
            )
            model = train_elm(X, y, selection.best, settings.seed)
            grid = predict_grid(model, bbox, settings.resolution)
        except ElmError as e:
            logger.error(f"Mapping {name} failed: {e}")
            sidecar["parameters"][name] = {"error": str(e)}
            continue

        writer.write_ascii_grid(f"maps/{name}.asc", grid)
        sidecar["parameters"][name] = {
            "n_stations": len(usable),
            "hidden_nodes": selection.best,
            "holdout_rmse": selection.test_rmse[selection.best],
            "holdout_r2": selection.test_r2[selection.best],
            "candidate_rmse": {str(k): v for k, v in selection.test_rmse.items()},
            "skipped_candidates": selection.skipped,
            "model": model.to_dict(),
            "grid": {"n_cols": grid.n_cols, "n_rows": grid.n_rows},
        }
    writer.write_json("maps/maps.json", sidecar)
    return sidecar


def run_pipeline(cfg: PipelineConfig) -> PipelineOutcome:
    """Process every station, then write summary tables, histograms, maps and manifest.

    Raises:
        ConfigError: If the configuration does not validate
    """
    cfg.validate()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    previous = RunManifest.load(cfg.output_dir / MANIFEST_NAME)
    files = cfg.station_files()
    logger.info(f"Processing {len(files)} stations with {cfg.jobs} jobs")

    results = run_stations(files, cfg)

    manifest = RunManifest(cfg.output_dir)
    for result in results:
        manifest.record_station(result.station_id, result.status, result.files, result.error)

    writer = OutputWriter(cfg.output_dir)
    writer.write_json("config.json", cfg.to_dict())
    rows = [r.row for r in results if r.row is not None]
    if rows:
        writer.write_table("summary.csv", rows, SUMMARY_COLUMNS)
        writer.write_json("summary.json", {"stations": rows})
        writer.write_table(
            "histograms.csv",
            emit_histograms(rows),
            ["parameter", "source", "bin_low", "bin_high", "count"],
        )
        if cfg.catalog is not None and cfg.elm.enabled:
            try:
                catalog = load_station_catalog(cfg.catalog)
                map_parameters(rows, catalog, cfg.elm, writer)
            except (ElmError, IngestError) as e:
                logger.error(f"Mapping skipped: {e}")

    for path in writer.written:
        manifest.add_file(path)

    changes = None
    if previous.files:
        changes = manifest.diff(previous)
        logger.info(
            f"Rerun into {cfg.output_dir}: {len(changes['added'])} files added, "
            f"{len(changes['changed'])} changed"
        )
        if changes["stale"]:
            logger.warning(
                f"{len(changes['stale'])} files from the previous run were not rewritten: "
                f"{', '.join(changes['stale'][:5])}"
            )
    manifest.save()

    return PipelineOutcome(
        exit_code=exit_status(results), manifest=manifest, results=results, changes=changes
    )

