"""Station data ingestion and daily aggregation."""

import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400

# More sub-threshold days than this and the series is not contiguous enough for MFDFA
MAX_GAP_FRACTION = 0.10


class IngestError(Exception):
    """Exception raised when station data cannot be ingested."""

    def __init__(self, message: str, station_id: str | None = None, line: int | None = None):
        """Initialize with the offending station and line.

        Args:
            message: Error message
            station_id: Station the data belongs to
            line: 1-based line number in the source file (header is line 1)
        """
        super().__init__(message)
        self.station_id = station_id
        self.line = line


@dataclass(frozen=True)
class GapRecord:
    """One entry of a station's gap report."""

    station_id: str
    date: str
    action: str
    coverage: float

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "date": self.date,
            "action": self.action,
            "coverage": round(self.coverage, 6),
        }


@dataclass
class TimeSeries:
    """Uniformly sampled scalar series with station metadata."""

    station_id: str
    start_date: date
    values: np.ndarray
    step: int = 1
    gaps: tuple[GapRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError(f"Series for {self.station_id} must be one-dimensional")
        if self.step <= 0:
            raise ValueError(f"Sampling step must be positive, got {self.step}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"Series for {self.station_id} contains non-finite values")

    def __len__(self) -> int:
        return self.values.size

    def dates(self) -> list[date]:
        """Calendar day of every sample."""
        return [self.start_date + timedelta(days=i * self.step) for i in range(len(self))]

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        """Copy of this series carrying different values (same dates and station)."""
        return TimeSeries(
            station_id=self.station_id,
            start_date=self.start_date,
            values=values,
            step=self.step,
            gaps=self.gaps,
        )


@dataclass
class RawRecordBatch:
    """High-frequency records of one station, in file order."""

    station_id: str
    timestamps: np.ndarray  # datetime64[s]
    values: np.ndarray
    missing: np.ndarray

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def rows(self) -> list[tuple]:
        return list(zip(self.timestamps.tolist(), self.values.tolist(), self.missing.tolist()))


@dataclass(frozen=True)
class StationMeta:
    """Coordinates of one measurement station."""

    station_id: str
    x: float
    y: float
    altitude: float = float("nan")


@dataclass
class CsvSchema:
    """Column layout of a station CSV file."""

    timestamp_column: str = "timestamp"
    value_column: str = "wind_speed"
    timestamp_format: str | None = None
    sentinels: tuple[str, ...] = ("-9999", "NA", "-")

    @classmethod
    def from_dict(cls, data: dict) -> "CsvSchema":
        schema = cls()
        if "timestamp_column" in data:
            schema.timestamp_column = data["timestamp_column"]
        if "value_column" in data:
            schema.value_column = data["value_column"]
        if "timestamp_format" in data:
            schema.timestamp_format = data["timestamp_format"]
        if "sentinels" in data:
            schema.sentinels = tuple(str(s) for s in data["sentinels"])
        return schema


def load_station_csv(
    path: Path, schema: CsvSchema | None = None, station_id: str | None = None
) -> RawRecordBatch:
    """Parse a station CSV file into a raw record batch.

    Args:
        path: CSV file with a header row
        schema: Column names and missing-value sentinels
        station_id: Station label (defaults to the file stem)

    Returns:
        Parsed batch; rows with an empty or sentinel value are flagged missing

    Raises:
        IngestError: If a row cannot be parsed or timestamps are not strictly increasing
    """
    path = Path(path)
    schema = schema or CsvSchema()
    station_id = station_id or path.stem

    if not path.exists():
        raise IngestError(f"Station file not found: {path}", station_id=station_id)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise IngestError(f"Station file {path.name} is empty", station_id=station_id, line=1)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        where = f" at line {line}" if line else ""
        raise IngestError(
            f"Malformed row in {path.name}{where}: {e}", station_id=station_id, line=line
        )
    for column in (schema.timestamp_column, schema.value_column):
        if column not in frame.columns:
            raise IngestError(
                f"Column '{column}' missing from {path.name} (found {list(frame.columns)})",
                station_id=station_id,
                line=1,
            )

    raw_times = frame[schema.timestamp_column].str.strip()
    raw_values = frame[schema.value_column].str.strip()

    timestamps = pd.to_datetime(raw_times, format=schema.timestamp_format, errors="coerce")
    bad_times = np.flatnonzero(timestamps.isna().to_numpy())
    if bad_times.size:
        line = int(bad_times[0]) + 2
        raise IngestError(
            f"Unparseable timestamp '{raw_times.iloc[bad_times[0]]}' at line {line}",
            station_id=station_id,
            line=line,
        )

    missing = (raw_values == "").to_numpy() | raw_values.isin(schema.sentinels).to_numpy()
    candidates = raw_values.where(~missing)
    try:
        # Exact decimal-to-double conversion; to_numeric may be off by an ulp
        numeric = candidates.astype(float).to_numpy()
    except ValueError:
        numeric = pd.to_numeric(candidates, errors="coerce").to_numpy(dtype=float)
    bad_values = np.flatnonzero(~missing & ~np.isfinite(numeric))
    if bad_values.size:
        line = int(bad_values[0]) + 2
        raise IngestError(
            f"Unparseable value '{raw_values.iloc[bad_values[0]]}' at line {line}",
            station_id=station_id,
            line=line,
        )

    stamps = timestamps.to_numpy().astype("datetime64[s]")
    non_increasing = np.flatnonzero(np.diff(stamps) <= np.timedelta64(0, "s"))
    if non_increasing.size:
        line = int(non_increasing[0]) + 3
        raise IngestError(
            f"Timestamps not strictly increasing at line {line} in {path.name}",
            station_id=station_id,
            line=line,
        )

    numeric[missing] = np.nan
    logger.debug(f"Loaded {len(stamps)} rows for {station_id} ({int(missing.sum())} missing)")

    return RawRecordBatch(
        station_id=station_id, timestamps=stamps, values=numeric, missing=missing
    )


def _samples_per_day(timestamps: np.ndarray) -> int:
    """Nominal samples per day from the median sampling interval."""
    if timestamps.size < 2:
        return 1
    interval = float(np.median(np.diff(timestamps).astype("timedelta64[s]").astype(float)))
    return max(1, int(round(SECONDS_PER_DAY / interval)))


def aggregate_daily_mean(batch: RawRecordBatch, min_coverage: float = 0.8) -> TimeSeries:
    """Average raw records into one value per calendar day.

    Days whose share of valid samples falls below ``min_coverage`` are linearly
    interpolated from the neighbouring days and reported in ``TimeSeries.gaps``.

    Args:
        batch: Raw records of one station
        min_coverage: Required fraction of the nominal samples per day, in (0, 1]

    Returns:
        Daily series spanning every calendar day from the first to the last record

    Raises:
        IngestError: If more than 10% of the days fall below the coverage threshold
    """
    if len(batch) == 0:
        raise IngestError("Cannot aggregate an empty batch", station_id=batch.station_id)
    if not 0.0 < min_coverage <= 1.0:
        raise ValueError(f"min_coverage must be in (0, 1], got {min_coverage}")

    days = batch.timestamps.astype("datetime64[D]")
    first_day = days[0]
    day_index = (days - first_day).astype(int)
    n_days = int(day_index[-1]) + 1

    valid = ~batch.missing
    sums = np.bincount(day_index[valid], weights=batch.values[valid], minlength=n_days)
    counts = np.bincount(day_index[valid], minlength=n_days)

    expected = _samples_per_day(batch.timestamps)
    coverage = np.minimum(counts / expected, 1.0)
    good = (coverage >= min_coverage) & (counts > 0)

    n_bad = int(n_days - good.sum())
    if n_bad > MAX_GAP_FRACTION * n_days or not good.any():
        raise IngestError(
            f"Station {batch.station_id}: {n_bad} of {n_days} days below coverage "
            f"{min_coverage}, series unfit for MFDFA",
            station_id=batch.station_id,
        )

    daily = np.full(n_days, np.nan)
    daily[good] = sums[good] / counts[good]

    start = date.fromisoformat(str(first_day))
    gaps = []
    if n_bad:
        positions = np.arange(n_days)
        daily[~good] = np.interp(positions[~good], positions[good], daily[good])
        for i in np.flatnonzero(~good):
            gaps.append(
                GapRecord(
                    station_id=batch.station_id,
                    date=(start + timedelta(days=int(i))).isoformat(),
                    action="interpolated",
                    coverage=float(coverage[i]),
                )
            )
        logger.warning(f"Station {batch.station_id}: interpolated {n_bad} of {n_days} days")

    return TimeSeries(
        station_id=batch.station_id, start_date=start, values=daily, step=1, gaps=tuple(gaps)
    )


def load_station_catalog(path: Path) -> dict[str, StationMeta]:
    """Read station coordinates from a CSV with columns station_id, x, y[, altitude].

    Raises:
        IngestError: On missing columns, duplicate ids or non-finite coordinates
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"Station catalog not found: {path}")

    frame = pd.read_csv(path, dtype={"station_id": str})
    for column in ("station_id", "x", "y"):
        if column not in frame.columns:
            raise IngestError(f"Catalog {path.name} lacks column '{column}'", line=1)

    catalog: dict[str, StationMeta] = {}
    for position, row in enumerate(frame.itertuples(index=False)):
        station_id = str(row.station_id).strip()
        x, y = float(row.x), float(row.y)
        if station_id in catalog:
            raise IngestError(
                f"Duplicate station id '{station_id}' in catalog",
                station_id=station_id,
                line=position + 2,
            )
        if not (math.isfinite(x) and math.isfinite(y)):
            raise IngestError(
                f"Non-finite coordinates for station '{station_id}'",
                station_id=station_id,
                line=position + 2,
            )
        altitude = float(getattr(row, "altitude", float("nan")))
        catalog[station_id] = StationMeta(station_id=station_id, x=x, y=y, altitude=altitude)

    logger.info(f"Loaded {len(catalog)} stations from {path.name}")
    return catalog
