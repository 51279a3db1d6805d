"""Shared test fixtures and configuration."""

import os

import numpy as np
import pandas as pd
import pytest

# Set environment variables BEFORE any imports so Config picks them up at import time
os.environ.setdefault("WINDFRACTAL_N_SURROGATES", "5")
os.environ.setdefault("WINDFRACTAL_SEED", "1234")

from src.mfdfa import MfdfaConfig  # noqa: E402
from src.stl import StlConfig  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(42)


@pytest.fixture
def temp_output_dir(tmp_path):
    """Create a temporary output directory for tests."""
    output_dir = tmp_path / "output"
    output_dir.mkdir()
    return output_dir


@pytest.fixture
def write_station_csv():
    """Factory writing a daily station CSV in the default ingestion layout."""

    def _write(path, values, start="2000-01-01", freq="D"):
        stamps = pd.date_range(start, periods=len(values), freq=freq)
        lines = ["timestamp,wind_speed"]
        lines += [f"{t.isoformat()},{v!r}" for t, v in zip(stamps, map(float, values))]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


@pytest.fixture
def small_mfdfa_config():
    """Dyadic scales and a coarse q grid for fast runs on 4096-sample series."""
    q = np.round(np.arange(-4.0, 4.0 + 1e-9, 0.5), 10)
    return MfdfaConfig(q_grid=q[q != 0], scales=[16, 32, 64, 128, 256, 512], detrend_degree=2)


@pytest.fixture
def weekly_stl_config():
    """Short-period decomposition for small synthetic series."""
    return StlConfig(period=7, seasonal_window=15)
