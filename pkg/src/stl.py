"""Seasonal-trend decomposition based on Loess (STL).

The inner loop alternates cycle-subseries smoothing, low-pass filtering and trend
smoothing; the outer loop derives bisquare robustness weights from the remainder.
statsmodels runs the loops for local degrees 0 and 1. The tricube loess below serves
``loess_smooth`` and the degree-2 variant.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from statsmodels.tsa.seasonal import STL

from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

# Evaluation points handled per batched local fit, bounds memory for long series
_CHUNK = 2048


class StlError(ValueError):
    """Exception raised when a decomposition cannot be computed."""


def _next_odd(value: float) -> int:
    n = math.ceil(value)
    return n if n % 2 == 1 else n + 1


@dataclass
class StlConfig:
    """Window lengths and iteration counts of the decomposition."""

    period: int = 365
    seasonal_window: int = 731
    trend_window: int | None = None
    lowpass_window: int | None = None
    inner_iterations: int = 2
    outer_iterations: int = 1
    loess_degree: int = 1

    def __post_init__(self) -> None:
        if self.trend_window is None:
            self.trend_window = _next_odd(
                1.5 * self.period / (1.0 - 1.5 / self.seasonal_window)
            )
        if self.lowpass_window is None:
            self.lowpass_window = _next_odd(self.period + 1)
        self.validate()

    def validate(self) -> None:
        errors = []
        if self.period < 2:
            errors.append(f"period must be >= 2, got {self.period}")
        if self.seasonal_window < 7 or self.seasonal_window % 2 == 0:
            errors.append(f"seasonal_window must be odd and >= 7, got {self.seasonal_window}")
        for name in ("trend_window", "lowpass_window"):
            value = getattr(self, name)
            if value <= self.period or value % 2 == 0:
                errors.append(f"{name} must be odd and greater than period, got {value}")
        if self.inner_iterations < 1:
            errors.append("inner_iterations must be >= 1")
        if self.outer_iterations < 0:
            errors.append("outer_iterations must be >= 0")
        if self.loess_degree not in (0, 1, 2):
            errors.append(f"loess_degree must be 0, 1 or 2, got {self.loess_degree}")
        if errors:
            raise StlError(f"Invalid STL configuration: {', '.join(errors)}")

    @classmethod
    def from_dict(cls, data: dict) -> "StlConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class StlDecomposition:
    """Trend, seasonal and remainder components summing to the input."""

    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: int
    robustness_weights: np.ndarray | None = None

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.remainder


def _loess_at(
    y: np.ndarray,
    eval_points: np.ndarray,
    window: int,
    degree: int,
    weights: np.ndarray | None,
) -> np.ndarray:
    """Local polynomial fits of equally spaced data ``y`` (abscissae 0..n-1).

    Each evaluation point uses its ``window`` nearest abscissae with tricube distance
    weights; when ``window`` exceeds the data length every point is used and the
    bandwidth grows by (window - n) / 2, as in the reference procedure.
    """
    n = y.size
    rw = np.ones(n) if weights is None else weights
    q = min(window, n)
    out = np.empty(eval_points.size)

    for start in range(0, eval_points.size, _CHUNK):
        v = eval_points[start : start + _CHUNK].astype(float)
        # Nearest q abscissae form a contiguous block centred on v, clipped at the ends
        left = np.clip(np.floor(v - (q - 1) / 2.0 + 0.5).astype(int), 0, n - q)
        idx = left[:, None] + np.arange(q)[None, :]
        dist = np.abs(idx - v[:, None])
        h = np.maximum(v - left, left + q - 1 - v)
        if window > n:
            h = h + (window - n) / 2.0
        h = np.maximum(h, 1e-12)
        u = np.clip(dist / h[:, None], 0.0, 1.0)
        w = (1.0 - u**3) ** 3 * rw[idx]

        yy = y[idx]
        if degree == 0:
            total = w.sum(axis=1)
            fitted = np.where(
                total > 0, (w * yy).sum(axis=1) / np.where(total > 0, total, 1.0), yy.mean(axis=1)
            )
        else:
            # Centre abscissae on the evaluation point so the fit value is the intercept
            t = (idx - v[:, None]) / h[:, None]
            basis = np.stack([t**k for k in range(degree + 1)], axis=-1)
            wb = basis * w[..., None]
            gram = np.einsum("pik,pil->pkl", wb, basis)
            rhs = np.einsum("pik,pi->pk", wb, yy)
            coef = np.einsum("pkl,pl->pk", np.linalg.pinv(gram, rcond=1e-12), rhs)
            fitted = coef[:, 0]
            empty = w.sum(axis=1) <= 0
            if np.any(empty):
                fitted[empty] = yy[empty].mean(axis=1)
        out[start : start + v.size] = fitted

    return out


def loess_smooth(
    x: np.ndarray,
    window: int,
    degree: int = 1,
    robustness_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Loess smoothing of an equally spaced series, evaluated at every index.

    Args:
        x: Values to smooth
        window: Number of neighbours in each local fit (odd)
        degree: Degree of the local polynomial (0, 1 or 2)
        robustness_weights: Optional per-point weights in [0, 1]

    Returns:
        Smoothed values, same length as ``x``

    Raises:
        StlError: If the window cannot determine a local polynomial of this degree
    """
    x = np.asarray(x, dtype=float)
    if degree not in (0, 1, 2):
        raise StlError(f"Loess degree must be 0, 1 or 2, got {degree}")
    if window < degree + 2:
        raise StlError(f"Loess window {window} too small for degree {degree}")
    if robustness_weights is not None:
        robustness_weights = np.asarray(robustness_weights, dtype=float)
        if robustness_weights.shape != x.shape:
            raise StlError("Robustness weights must match the series length")
        if np.any((robustness_weights < 0) | (robustness_weights > 1)):
            raise StlError("Robustness weights must lie in [0, 1]")
    if x.size == 0:
        return x.copy()
    if x.size == 1:
        return x.copy()

    return _loess_at(x, np.arange(x.size, dtype=float), window, degree, robustness_weights)


def _moving_average(x: np.ndarray, length: int) -> np.ndarray:
    kernel = np.ones(length) / length
    return np.convolve(x, kernel, mode="valid")


def _cycle_subseries(
    detrended: np.ndarray, period: int, cfg: StlConfig, rw: np.ndarray
) -> np.ndarray:
    """Smooth every cycle-subseries, extended by one cycle at each end."""
    n = detrended.size
    extended = np.empty(n + 2 * period)
    for phase in range(period):
        sub = detrended[phase::period]
        sub_w = rw[phase::period]
        m = sub.size
        if m == 0:
            continue
        positions = np.arange(-1, m + 1, dtype=float)
        if m == 1:
            smoothed = np.full(m + 2, sub[0])
        else:
            degree = min(cfg.loess_degree, m - 1)
            smoothed = _loess_at(sub, positions, cfg.seasonal_window, degree, sub_w)
        extended[phase : phase + (m + 2) * period : period] = smoothed
    return extended


def _low_pass(extended: np.ndarray, period: int, cfg: StlConfig) -> np.ndarray:
    filtered = _moving_average(extended, period)
    filtered = _moving_average(filtered, period)
    filtered = _moving_average(filtered, 3)
    return loess_smooth(filtered, cfg.lowpass_window, min(cfg.loess_degree, 1))


def _bisquare_weights(remainder: np.ndarray) -> np.ndarray:
    h = 6.0 * np.median(np.abs(remainder))
    if h <= 0:
        return np.ones_like(remainder)
    u = np.clip(np.abs(remainder) / h, 0.0, 1.0)
    return (1.0 - u**2) ** 2


def _quadratic_stl(y: np.ndarray, cfg: StlConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inner and outer loops run on the local loess, for degree-2 smoothers."""
    n = y.size
    period = cfg.period
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    rw = np.ones(n)

    for outer in range(cfg.outer_iterations + 1):
        for _ in range(cfg.inner_iterations):
            extended = _cycle_subseries(y - trend, period, cfg, rw)
            low = _low_pass(extended, period, cfg)
            seasonal = extended[period : period + n] - low
            trend = _loess_at(
                y - seasonal, np.arange(n, dtype=float), cfg.trend_window, cfg.loess_degree, rw
            )
        if outer < cfg.outer_iterations:
            rw = _bisquare_weights(y - trend - seasonal)
    return trend, seasonal, rw


def stl_decompose(ts: TimeSeries, cfg: StlConfig | None = None) -> StlDecomposition:
    """Decompose a series into trend, seasonal and remainder components.

    Degrees 0 and 1 run statsmodels' STL; degree 2 runs the same loops on the local
    loess of this module.

    Args:
        ts: Daily series
        cfg: Window lengths and loop counts

    Returns:
        Components with trend + seasonal + remainder equal to the input

    Raises:
        StlError: If the series spans fewer than two periods
    """
    cfg = cfg or StlConfig()
    y = np.asarray(ts.values, dtype=float)
    n = y.size
    period = cfg.period
    if n < 2 * period:
        raise StlError(
            f"Series {ts.station_id} has {n} samples, STL needs at least {2 * period}"
        )

    if cfg.loess_degree == 2:
        trend, seasonal, rw = _quadratic_stl(y, cfg)
    else:
        fitted = STL(
            y,
            period=period,
            seasonal=cfg.seasonal_window,
            trend=cfg.trend_window,
            low_pass=cfg.lowpass_window,
            seasonal_deg=cfg.loess_degree,
            trend_deg=cfg.loess_degree,
            low_pass_deg=cfg.loess_degree,
            robust=cfg.outer_iterations > 0,
        ).fit(inner_iter=cfg.inner_iterations, outer_iter=cfg.outer_iterations)
        trend = np.asarray(fitted.trend, dtype=float)
        seasonal = np.asarray(fitted.seasonal, dtype=float)
        rw = np.asarray(fitted.weights, dtype=float)

    remainder = y - trend - seasonal
    logger.debug(
        f"STL for {ts.station_id}: period={period}, remainder sd={remainder.std():.4g}"
    )
    return StlDecomposition(
        trend=trend,
        seasonal=seasonal,
        remainder=remainder,
        period=period,
        robustness_weights=rw,
    )
