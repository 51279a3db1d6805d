"""Configuration management for windfractal."""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from .mfdfa import MfdfaConfig, MfdfaError
from .stl import StlConfig, StlError
from .timeseries import CsvSchema

# Load environment variables from .env file (if exists)
load_dotenv(override=False)


class ConfigError(ValueError):
    """Exception raised for an invalid pipeline configuration."""


class Config:
    """Application defaults, overridable through WINDFRACTAL_* environment variables."""

    OUTPUT_DIR: Path = Path(os.getenv("WINDFRACTAL_OUTPUT_DIR", "output"))
    JOBS: int = int(os.getenv("WINDFRACTAL_JOBS", "1"))
    SEED: int = int(os.getenv("WINDFRACTAL_SEED", "20160101"))

    # Surrogate testing
    N_SURROGATES: int = int(os.getenv("WINDFRACTAL_N_SURROGATES", "1000"))

    # Ingestion
    MIN_COVERAGE: float = float(os.getenv("WINDFRACTAL_MIN_COVERAGE", "0.8"))

    # Mapping
    GRID_RESOLUTION: float = float(os.getenv("WINDFRACTAL_GRID_RESOLUTION", "250"))
    HOLDOUT_FRACTION: float = float(os.getenv("WINDFRACTAL_HOLDOUT_FRACTION", "0.2"))

    # Logging
    LOG_LEVEL: str = os.getenv("WINDFRACTAL_LOG_LEVEL", "INFO")

    @classmethod
    def validate(cls) -> None:
        """Validate the environment-derived defaults."""
        errors = []

        if cls.JOBS < 1:
            errors.append("WINDFRACTAL_JOBS must be >= 1")
        if cls.N_SURROGATES < 2:
            errors.append("WINDFRACTAL_N_SURROGATES must be >= 2")
        if not 0.0 < cls.MIN_COVERAGE <= 1.0:
            errors.append("WINDFRACTAL_MIN_COVERAGE must be in (0, 1]")
        if cls.GRID_RESOLUTION <= 0:
            errors.append("WINDFRACTAL_GRID_RESOLUTION must be positive")
        if not 0.0 < cls.HOLDOUT_FRACTION <= 0.5:
            errors.append("WINDFRACTAL_HOLDOUT_FRACTION must be in (0, 0.5]")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")


@dataclass
class ElmSettings:
    """Hidden-node candidates, split and grid for the mapping step."""

    candidates: list[int] = field(default_factory=lambda: [5, 10, 20, 40, 80, 160])
    holdout_fraction: float = field(default_factory=lambda: Config.HOLDOUT_FRACTION)
    seed: int = field(default_factory=lambda: Config.SEED)
    resolution: float = field(default_factory=lambda: Config.GRID_RESOLUTION)
    bbox: tuple[float, float, float, float] | None = None
    enabled: bool = True


@dataclass
class PipelineConfig:
    """Everything one batch run needs."""

    input_dir: Path
    output_dir: Path = field(default_factory=lambda: Config.OUTPUT_DIR)
    catalog: Path | None = None
    csv: CsvSchema = field(default_factory=CsvSchema)
    min_coverage: float = field(default_factory=lambda: Config.MIN_COVERAGE)
    stl: StlConfig = field(default_factory=StlConfig)
    stl_enabled: bool = True
    mfdfa: MfdfaConfig = field(default_factory=MfdfaConfig)
    n_surrogates: int = field(default_factory=lambda: Config.N_SURROGATES)
    base_seed: int = field(default_factory=lambda: Config.SEED)
    elm: ElmSettings = field(default_factory=ElmSettings)
    jobs: int = field(default_factory=lambda: Config.JOBS)

    def station_files(self) -> list[Path]:
        return sorted(p for p in self.input_dir.glob("*.csv") if p.is_file())

    def validate(self) -> None:
        """Check paths and ranges, collecting every problem into one error.

        Raises:
            ConfigError: If anything is invalid
        """
        errors = []
        if not self.input_dir.is_dir():
            errors.append(f"input directory {self.input_dir} does not exist")
        elif not self.station_files():
            errors.append(f"input directory {self.input_dir} has no station CSV files")
        if self.catalog is not None and not self.catalog.is_file():
            errors.append(f"station catalog {self.catalog} does not exist")
        if self.jobs < 1:
            errors.append("jobs must be >= 1")
        if self.n_surrogates < 2:
            errors.append("surrogate count must be >= 2")
        if not 0.0 < self.min_coverage <= 1.0:
            errors.append("min_coverage must be in (0, 1]")
        if not 0.0 < self.elm.holdout_fraction <= 0.5:
            errors.append("elm holdout_fraction must be in (0, 0.5]")
        if not self.elm.candidates:
            errors.append("elm candidates must not be empty")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

    def to_dict(self) -> dict:
        return {
            "input_dir": str(self.input_dir),
            "catalog": str(self.catalog) if self.catalog else None,
            "min_coverage": self.min_coverage,
            "stl": {**self.stl.to_dict(), "enabled": self.stl_enabled},
            "mfdfa": self.mfdfa.to_dict(),
            "surrogate": {"n": self.n_surrogates, "base_seed": self.base_seed},
            "elm": {
                "candidates": list(self.elm.candidates),
                "holdout_fraction": self.elm.holdout_fraction,
                "seed": self.elm.seed,
                "resolution": self.elm.resolution,
                "bbox": list(self.elm.bbox) if self.elm.bbox else None,
                "enabled": self.elm.enabled,
            },
        }


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_pipeline_config(
    path: Path | None = None,
    *,
    input_dir: Path | None = None,
    output_dir: Path | None = None,
    seed: int | None = None,
    jobs: int | None = None,
) -> PipelineConfig:
    """Build a PipelineConfig from a JSON file plus command-line overrides.

    Relative paths inside the file are resolved against the file's directory.

    Raises:
        ConfigError: If the file cannot be read or a section is invalid
    """
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Configuration file {path} not found")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file {path} is not valid JSON: {e}")
        base = path.parent

    resolved_input = input_dir or _resolve(base, data.get("input_dir"))
    if resolved_input is None:
        raise ConfigError("Configuration errors: input_dir is required")

    try:
        csv_section = data.get("csv", {})
        stl_section = dict(data.get("stl", {}))
        stl_enabled = bool(stl_section.pop("enabled", True))
        surrogate_section = data.get("surrogate", {})
        elm_section = data.get("elm", {})

        elm = ElmSettings()
        if "candidates" in elm_section:
            elm.candidates = [int(c) for c in elm_section["candidates"]]
        if "holdout_fraction" in elm_section:
            elm.holdout_fraction = float(elm_section["holdout_fraction"])
        if "seed" in elm_section:
            elm.seed = int(elm_section["seed"])
        if "resolution" in elm_section:
            elm.resolution = float(elm_section["resolution"])
        if elm_section.get("bbox"):
            elm.bbox = tuple(float(v) for v in elm_section["bbox"])
        if "enabled" in elm_section:
            elm.enabled = bool(elm_section["enabled"])

        cfg = PipelineConfig(
            input_dir=Path(resolved_input),
            output_dir=Path(output_dir or _resolve(base, data.get("output_dir")) or Config.OUTPUT_DIR),
            catalog=_resolve(base, data.get("catalog")),
            csv=CsvSchema.from_dict(csv_section),
            min_coverage=float(csv_section.get("min_coverage", Config.MIN_COVERAGE)),
            stl=StlConfig.from_dict(stl_section),
            stl_enabled=stl_enabled,
            mfdfa=MfdfaConfig.from_dict(data.get("mfdfa", {})),
            n_surrogates=int(surrogate_section.get("n", Config.N_SURROGATES)),
            base_seed=int(surrogate_section.get("base_seed", Config.SEED)),
            elm=elm,
            jobs=int(data.get("jobs", Config.JOBS)),
        )
    except (StlError, MfdfaError, TypeError, ValueError) as e:
        raise ConfigError(f"Configuration errors: {e}")

    if seed is not None:
        cfg.base_seed = seed
        cfg.elm.seed = seed
    if jobs is not None:
        cfg.jobs = jobs
    return cfg
