"""Writers for the tabular, nested and raster outputs of an analysis run."""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .elm import GridMap
from .mfdfa import STATIONARY_CAVEAT, MfdfaConfig, MfdfaResult
from .stl import StlDecomposition
from .timeseries import GapRecord, TimeSeries

logger = logging.getLogger(__name__)

NODATA = -9999.0
FLOAT_FORMAT = "%.12g"


def to_jsonable(value):
    """Convert numpy containers and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


class OutputWriter:
    """Writes files below one root directory and remembers what it wrote."""

    def __init__(self, root: Path):
        """Initialize writer.

        Args:
            root: Directory all relative output paths are resolved against
        """
        self.root = Path(root)
        self.written: list[Path] = []

    def _target(self, relative: str | Path) -> Path:
        path = self.root / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(path)
        return path

    def write_json(self, relative: str | Path, data) -> Path:
        path = self._target(relative)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.debug(f"Wrote {path}")
        return path

    def write_jsonl(self, relative: str | Path, records: list[dict]) -> Path:
        path = self._target(relative)
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(to_jsonable(record), sort_keys=True) + "\n")
        return path

    def write_table(self, relative: str | Path, rows: list[dict], columns: list[str]) -> Path:
        """CSV table with a fixed column order; missing values stay empty."""
        path = self._target(relative)
        frame = pd.DataFrame(rows, columns=columns)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"Wrote {len(rows)} rows to {path}")
        return path

    def write_series(self, relative: str | Path, ts: TimeSeries, value_column: str) -> Path:
        """Series as a two-column CSV readable by the station ingestion."""
        rows = [
            {"timestamp": day.isoformat(), value_column: value}
            for day, value in zip(ts.dates(), ts.values)
        ]
        return self.write_table(relative, rows, ["timestamp", value_column])

    def write_decomposition(
        self, relative: str | Path, ts: TimeSeries, decomposition: StlDecomposition
    ) -> Path:
        rows = [
            {"date": day.isoformat(), "trend": t, "seasonal": s, "remainder": r}
            for day, t, s, r in zip(
                ts.dates(), decomposition.trend, decomposition.seasonal, decomposition.remainder
            )
        ]
        return self.write_table(relative, rows, ["date", "trend", "seasonal", "remainder"])

    def write_matrix(
        self,
        relative: str | Path,
        row_name: str,
        row_labels: np.ndarray,
        col_labels: np.ndarray,
        matrix: np.ndarray,
    ) -> Path:
        path = self._target(relative)
        frame = pd.DataFrame(matrix, columns=[str(c) for c in col_labels])
        frame.insert(0, row_name, row_labels)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def write_ascii_grid(self, relative: str | Path, grid: GridMap) -> Path:
        """ESRI ASCII grid; rows are written from north to south."""
        path = self._target(relative)
        rows = grid.as_rows()[::-1]
        rows = np.where(np.isfinite(rows), rows, NODATA)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"ncols {grid.n_cols}\n")
            f.write(f"nrows {grid.n_rows}\n")
            f.write(f"xllcorner {grid.x_min:.6f}\n")
            f.write(f"yllcorner {grid.y_min:.6f}\n")
            f.write(f"cellsize {grid.resolution:.6f}\n")
            f.write(f"NODATA_value {NODATA:g}\n")
            for row in rows:
                f.write(" ".join(f"{v:.8g}" for v in row) + "\n")
        logger.info(f"Wrote {grid.n_cols}x{grid.n_rows} grid to {path}")
        return path

    def write_gap_report(self, relative: str | Path, gaps: tuple[GapRecord, ...]) -> Path:
        return self.write_jsonl(relative, [gap.to_dict() for gap in gaps])


def mfdfa_document(station_id: str, result: MfdfaResult, cfg: MfdfaConfig) -> dict:
    """Nested JSON document describing one MFDFA run."""
    surface, hurst, spectrum, summary = result
    document = {
        "station_id": station_id,
        "config": cfg.to_dict(),
        "fluctuation": {
            "q": surface.q_grid,
            "scales": surface.scales,
            "F": surface.values,
            "n_segments": surface.n_segments_per_scale,
            "floored_variances": surface.floored_variances,
        },
        "hurst": {
            "q": hurst.q_grid,
            "h": hurst.h,
            "stderr": hurst.stderr,
            "r2": hurst.r2,
        },
        "spectrum": {
            "q": spectrum.q_grid,
            "tau": spectrum.tau,
            "alpha": spectrum.alpha,
            "f_alpha": spectrum.f_alpha,
        },
        "summary": summary.to_dict(),
        "notes": [STATIONARY_CAVEAT],
    }
    for q in (0.0, 1.0):
        if np.any(np.isclose(hurst.q_grid, q)):
            h, stderr = hurst.at(q)
            document["hurst"][f"h{int(q)}"] = {"value": h, "stderr": stderr}
    return document
