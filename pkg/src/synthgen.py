"""Synthetic series with known scaling properties, used as analysis oracles."""

import logging
import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

SYNTH_START = date(2000, 1, 1)


@dataclass(frozen=True)
class CascadeSpec:
    """Deterministic binomial cascade of 2**levels samples with multiplier ``a``."""

    levels: int
    a: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.levels <= 24:
            raise ValueError(f"Cascade levels must be in [1, 24], got {self.levels}")
        if not 0.5 <= self.a < 1.0:
            raise ValueError(f"Cascade multiplier must be in [0.5, 1), got {self.a}")


def binomial_cascade(spec: CascadeSpec, station_id: str = "cascade") -> TimeSeries:
    """Binomial multiplicative measure on 2**levels dyadic cells.

    Cell k carries a**n(k) * (1 - a)**(levels - n(k)), n(k) the number of 1-bits of k,
    so the values sum to 1.
    """
    values = np.ones(1)
    for _ in range(spec.levels):
        # Each level splits every cell; the upper half of the index range takes a
        values = np.concatenate([values * (1.0 - spec.a), values * spec.a])
    return TimeSeries(station_id=station_id, start_date=SYNTH_START, values=values)


def analytic_cascade_hurst(a: float, q: float) -> float:
    """Generalized Hurst exponent of the binomial cascade.

    h(q) = 1/q - ln(a**q + (1 - a)**q) / (q ln 2); at q = 0 the continuous limit
    -(ln a + ln(1 - a)) / (2 ln 2) is returned.
    """
    if not 0.5 <= a < 1.0:
        raise ValueError(f"Cascade multiplier must be in [0.5, 1), got {a}")
    b = 1.0 - a
    if q == 0:
        return -(math.log(a) + math.log(b)) / (2.0 * math.log(2.0))
    # log(a**q + b**q) evaluated stably for large |q|
    log_sum = np.logaddexp(q * math.log(a), q * math.log(b))
    return 1.0 / q - float(log_sum) / (q * math.log(2.0))


def white_noise(n: int, seed: int, station_id: str = "white_noise") -> TimeSeries:
    """Standard normal i.i.d. draws from a PCG64 generator."""
    if n < 2:
        raise ValueError(f"White noise needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    return TimeSeries(station_id=station_id, start_date=SYNTH_START, values=rng.standard_normal(n))


def fgn_autocovariance(H: float, k: np.ndarray) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise at lags k."""
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def _spectral_fgn(H: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Approximate fGn from a random-phase 1/f**(2H-1) spectrum, rescaled to unit variance."""
    freqs = np.fft.rfftfreq(2 * n)[1:]
    amplitude = freqs ** (-(2 * H - 1) / 2.0)
    phases = rng.uniform(0, 2 * np.pi, freqs.size)
    spectrum = np.concatenate([[0.0], amplitude * np.exp(1j * phases)])
    series = np.fft.irfft(spectrum, 2 * n)[:n]
    return (series - series.mean()) / series.std()


def fractional_noise(
    H_target: float, n: int, seed: int, station_id: str = "fgn"
) -> TimeSeries:
    """Fractional Gaussian noise by circulant embedding of its exact covariance.

    Falls back to spectral synthesis if the embedding has negative eigenvalues.

    Args:
        H_target: Hurst exponent in (0, 1)
        n: Number of samples, a power of 2
        seed: Generator seed

    Raises:
        ValueError: If H_target is outside (0, 1) or n is not a power of 2
    """
    if not 0.0 < H_target < 1.0:
        raise ValueError(f"H_target must be in (0, 1), got {H_target}")
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of 2, got {n}")

    rng = np.random.default_rng(seed)
    lags = np.arange(n + 1)
    gamma = fgn_autocovariance(H_target, lags)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigenvalues = np.fft.fft(row).real

    if np.any(eigenvalues < -1e-10 * np.abs(eigenvalues).max()):
        logger.warning(
            f"Circulant embedding not nonnegative for H={H_target}, n={n}; "
            f"using spectral synthesis"
        )
        values = _spectral_fgn(H_target, n, rng)
    else:
        m = row.size
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        z = np.fft.fft(np.sqrt(np.maximum(eigenvalues, 0.0) / m) * w)
        values = z.real[:n]

    return TimeSeries(station_id=station_id, start_date=SYNTH_START, values=values)
