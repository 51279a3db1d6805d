"""Shuffled-surrogate significance testing of the multifractal parameters."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mfdfa import MfdfaConfig, MfdfaError, MultifractalSummary, analyze
from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

PARAMETERS = ("H", "W", "A")

# More failed surrogates than this share marks the series as pathological
MAX_FAILURE_FRACTION = 0.20


class SurrogateError(Exception):
    """Exception raised when too many surrogates fail."""

    def __init__(self, message: str, failures: int, n: int):
        """Initialize with the failure count.

        Args:
            message: Error message
            failures: Surrogates whose analysis failed
            n: Surrogates requested
        """
        super().__init__(message)
        self.failures = failures
        self.n = n


@dataclass
class SurrogateEnsemble:
    """H, W and A of every shuffled surrogate of one series."""

    station_id: str
    n_surrogates: int
    H_values: np.ndarray
    W_values: np.ndarray
    A_values: np.ndarray
    original: MultifractalSummary
    failures: int = 0

    def values(self, name: str) -> np.ndarray:
        return getattr(self, f"{name}_values")

    def mean(self, name: str) -> float:
        return float(np.mean(self.values(name)))

    def std(self, name: str) -> float:
        return float(np.std(self.values(name)))


@dataclass
class ParameterSignificance:
    """Position of one original parameter within its surrogate distribution."""

    name: str
    original: float
    mean: float
    std: float
    z: float | None
    percentile: float
    p_two_sided: float

    def to_dict(self) -> dict:
        return {
            "original": self.original,
            "mean": self.mean,
            "std": self.std,
            "z": self.z,
            "percentile": self.percentile,
            "p_two_sided": self.p_two_sided,
        }


@dataclass
class SignificanceReport:
    """Significance of H, W and A against the shuffled-data null."""

    station_id: str
    n: int
    failures: int
    parameters: dict[str, ParameterSignificance] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "original": {name: p.original for name, p in self.parameters.items()},
            "surrogate": {
                "n": self.n,
                "failures": self.failures,
                **{name: p.to_dict() for name, p in self.parameters.items()},
            },
        }


def shuffle(x: np.ndarray, seed: int) -> np.ndarray:
    """Uniform random permutation from a seeded PCG64 generator."""
    x = np.asarray(x)
    return np.random.default_rng(seed).permutation(x)


def surrogate_ensemble(
    ts: TimeSeries,
    cfg: MfdfaConfig,
    n: int,
    base_seed: int,
    original: MultifractalSummary | None = None,
) -> SurrogateEnsemble:
    """Analyze ``n`` shuffled copies of a series; surrogate i uses seed base_seed + i.

    Surrogates whose spectrum cannot be summarised are skipped and counted.

    Raises:
        SurrogateError: If more than 20% of the surrogates fail
    """
    if n < 2:
        raise ValueError(f"Need at least 2 surrogates, got {n}")
    if original is None:
        original = analyze(ts, cfg).summary

    collected = {name: [] for name in PARAMETERS}
    failures = 0
    for i in range(n):
        shuffled = ts.with_values(shuffle(ts.values, base_seed + i))
        try:
            summary = analyze(shuffled, cfg).summary
        except MfdfaError as e:
            failures += 1
            logger.debug(f"Surrogate {i} of {ts.station_id} skipped: {e}")
            continue
        for name in PARAMETERS:
            collected[name].append(getattr(summary, name))

    if failures > MAX_FAILURE_FRACTION * n:
        raise SurrogateError(
            f"{failures} of {n} surrogates failed for {ts.station_id}", failures=failures, n=n
        )
    if failures:
        logger.warning(f"Station {ts.station_id}: {failures} of {n} surrogates skipped")

    ensemble = SurrogateEnsemble(
        station_id=ts.station_id,
        n_surrogates=n - failures,
        H_values=np.asarray(collected["H"]),
        W_values=np.asarray(collected["W"]),
        A_values=np.asarray(collected["A"]),
        original=original,
        failures=failures,
    )
    logger.info(
        f"Station {ts.station_id}: {ensemble.n_surrogates} surrogates, "
        f"mean H={ensemble.mean('H'):.4f} W={ensemble.mean('W'):.4f} A={ensemble.mean('A'):.4f}"
    )
    return ensemble


def significance(ens: SurrogateEnsemble) -> SignificanceReport:
    """z-scores and empirical percentiles of the original H, W and A.

    With zero surrogate spread the z-score is omitted and only the percentile is given.
    """
    report = SignificanceReport(
        station_id=ens.station_id, n=ens.n_surrogates, failures=ens.failures
    )
    for name in PARAMETERS:
        values = ens.values(name)
        original = float(getattr(ens.original, name))
        mean, std = ens.mean(name), ens.std(name)
        z = (original - mean) / std if std > 0 else None
        # Mid-rank percentile: ties count half
        below = float(np.sum(values < original))
        ties = float(np.sum(values == original))
        percentile = (below + 0.5 * ties) / values.size
        p_two_sided = min(1.0, 2.0 * min(percentile, 1.0 - percentile))
        report.parameters[name] = ParameterSignificance(
            name=name,
            original=original,
            mean=mean,
            std=std,
            z=z if z is None or math.isfinite(z) else None,
            percentile=percentile,
            p_two_sided=p_two_sided,
        )
    return report
