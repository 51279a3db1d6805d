"""Tests for station ingestion and daily aggregation."""

from datetime import date

import numpy as np
import pytest

from src.timeseries import (
    CsvSchema,
    IngestError,
    TimeSeries,
    aggregate_daily_mean,
    load_station_catalog,
    load_station_csv,
)


def _ten_minute_csv(path, days, skip=None):
    """Write days x 144 ten-minute records; ``skip`` maps day -> number of missing rows."""
    skip = skip or {}
    lines = ["timestamp,wind_speed"]
    for day in range(days):
        for k in range(144):
            if k < skip.get(day, 0):
                continue
            hour, minute = divmod(k * 10, 60)
            stamp = f"2001-03-{day + 1:02d}T{hour:02d}:{minute:02d}:00"
            lines.append(f"{stamp},{day + 1}.0")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_station_csv_parses_rows(tmp_path):
    """Test loading a well-formed station file."""
    path = tmp_path / "STA.csv"
    path.write_text(
        "timestamp,wind_speed\n2001-01-01T00:00,3.5\n2001-01-01T00:10,NA\n2001-01-01T00:20,4\n"
    )

    batch = load_station_csv(path)

    assert batch.station_id == "STA"
    assert len(batch) == 3
    assert batch.missing.tolist() == [False, True, False]
    assert batch.values[0] == 3.5
    assert np.isnan(batch.values[1])


def test_load_station_csv_custom_schema(tmp_path):
    """Test column names and sentinels come from the schema."""
    path = tmp_path / "custom.csv"
    path.write_text("time,speed\n2001-01-01,1.0\n2001-01-02,999\n")
    schema = CsvSchema(timestamp_column="time", value_column="speed", sentinels=("999",))

    batch = load_station_csv(path, schema, station_id="X1")

    assert batch.station_id == "X1"
    assert batch.missing.tolist() == [False, True]


def test_load_station_csv_reports_bad_value_line(tmp_path):
    """Test an unparseable value names its 1-based line (header is line 1)."""
    path = tmp_path / "bad.csv"
    path.write_text("timestamp,wind_speed\n2001-01-01,1.0\n2001-01-02,1.5\n2001-01-03,fast\n")

    with pytest.raises(IngestError) as exc_info:
        load_station_csv(path)

    assert exc_info.value.line == 4
    assert exc_info.value.station_id == "bad"


def test_load_station_csv_ragged_row(tmp_path):
    """Test a row with an extra field is reported as an ingestion error with its line."""
    path = tmp_path / "ragged.csv"
    path.write_text("timestamp,wind_speed\n2001-01-01,1.0\n2001-01-02,1.5\n2001-01-03,2.0,9\n")

    with pytest.raises(IngestError) as exc_info:
        load_station_csv(path)

    assert exc_info.value.line == 4
    assert exc_info.value.station_id == "ragged"
    assert "line 4" in str(exc_info.value)


def test_load_station_csv_empty_file(tmp_path):
    """Test an empty file is an ingestion error."""
    path = tmp_path / "empty.csv"
    path.write_text("")

    with pytest.raises(IngestError) as exc_info:
        load_station_csv(path)

    assert exc_info.value.line == 1


def test_load_station_csv_values_exact(tmp_path):
    """Test values with 17 significant digits are read back bit for bit."""
    values = [0.1 + 0.2, 1 / 3, 2.0**-30 * 3, 123456.78901234567, 9.999999999999998]
    lines = [f"2001-01-{i + 1:02d},{v!r}" for i, v in enumerate(values)]
    path = tmp_path / "exact.csv"
    path.write_text("timestamp,wind_speed\n" + "\n".join(lines) + "\n")

    batch = load_station_csv(path)

    assert batch.values.tolist() == values


def test_load_station_csv_rejects_unordered_timestamps(tmp_path):
    """Test non-increasing timestamps are rejected."""
    path = tmp_path / "order.csv"
    path.write_text("timestamp,wind_speed\n2001-01-02,1.0\n2001-01-01,1.5\n")

    with pytest.raises(IngestError) as exc_info:
        load_station_csv(path)

    assert exc_info.value.line == 3


def test_load_station_csv_missing_column(tmp_path):
    """Test a missing value column is reported against the header."""
    path = tmp_path / "cols.csv"
    path.write_text("timestamp,speed\n2001-01-01,1.0\n")

    with pytest.raises(IngestError) as exc_info:
        load_station_csv(path)

    assert exc_info.value.line == 1


def test_aggregate_daily_mean_full_coverage(tmp_path):
    """Test ten-minute data averages to one value per day."""
    batch = load_station_csv(_ten_minute_csv(tmp_path / "S.csv", days=3))

    ts = aggregate_daily_mean(batch)

    assert ts.start_date == date(2001, 3, 1)
    np.testing.assert_allclose(ts.values, [1.0, 2.0, 3.0])
    assert ts.gaps == ()


def test_aggregate_daily_mean_interpolates_sparse_day(tmp_path):
    """Test a day below coverage is interpolated and reported."""
    path = _ten_minute_csv(tmp_path / "S.csv", days=11, skip={5: 100})
    batch = load_station_csv(path)

    ts = aggregate_daily_mean(batch, min_coverage=0.8)

    assert len(ts) == 11
    assert ts.values[5] == pytest.approx(6.0)
    assert len(ts.gaps) == 1
    gap = ts.gaps[0]
    assert gap.date == "2001-03-06"
    assert gap.action == "interpolated"
    assert gap.coverage == pytest.approx(44 / 144)


def test_aggregate_daily_mean_too_many_gaps(tmp_path):
    """Test more than 10% sparse days rejects the station."""
    path = _ten_minute_csv(tmp_path / "S.csv", days=5, skip={1: 140, 3: 140})

    with pytest.raises(IngestError):
        aggregate_daily_mean(load_station_csv(path))


def test_aggregate_daily_series_passes_through(tmp_path, write_station_csv):
    """Test daily input is kept as is (one sample per day is full coverage)."""
    values = np.linspace(1.0, 2.0, 20)
    batch = load_station_csv(write_station_csv(tmp_path / "D.csv", values))

    ts = aggregate_daily_mean(batch)

    np.testing.assert_array_equal(ts.values, values)


def test_aggregate_invalid_coverage(tmp_path, write_station_csv):
    """Test coverage outside (0, 1] is rejected."""
    batch = load_station_csv(write_station_csv(tmp_path / "D.csv", [1.0, 2.0]))

    with pytest.raises(ValueError):
        aggregate_daily_mean(batch, min_coverage=0.0)


def test_timeseries_rejects_nan():
    """Test TimeSeries requires finite values."""
    with pytest.raises(ValueError):
        TimeSeries(station_id="x", start_date=date(2000, 1, 1), values=[1.0, float("nan")])


def test_timeseries_dates_and_with_values():
    """Test calendar dates and value replacement keep station metadata."""
    ts = TimeSeries(station_id="x", start_date=date(2000, 2, 28), values=[1.0, 2.0, 3.0])

    assert ts.dates()[-1] == date(2000, 3, 1)
    other = ts.with_values(np.zeros(3))
    assert other.station_id == "x"
    assert other.start_date == ts.start_date


def test_load_station_catalog(tmp_path):
    """Test station coordinates load by id."""
    path = tmp_path / "catalog.csv"
    path.write_text("station_id,x,y,altitude\nA,600000,200000,500\nB,610000,190000,1200\n")

    catalog = load_station_catalog(path)

    assert set(catalog) == {"A", "B"}
    assert catalog["B"].x == 610000.0
    assert catalog["B"].altitude == 1200.0


def test_load_station_catalog_duplicate_id(tmp_path):
    """Test duplicate station ids are rejected with their line."""
    path = tmp_path / "catalog.csv"
    path.write_text("station_id,x,y\nA,1,2\nA,3,4\n")

    with pytest.raises(IngestError) as exc_info:
        load_station_catalog(path)

    assert exc_info.value.line == 3
