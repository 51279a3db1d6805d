"""Multifractal detrended fluctuation analysis (MFDFA).

Pipeline: profile -> forward/backward segment variances -> q-order fluctuation
functions F_q(s) -> generalized Hurst exponents h_q -> Legendre spectrum f(alpha) ->
summary parameters H, W and A from a 4th-order polynomial fit of the spectrum.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import logsumexp

from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-300
MAX_CROSSING_DISTANCE = 2.0
_SEARCH_POINTS = 4001
_FLAT_SPREAD = 1e-9
STATIONARY_CAVEAT = "H equals h(q=2) for stationary series"


class MfdfaError(Exception):
    """Exception raised when the analysis cannot be completed."""

    def __init__(self, message: str, scale: int | None = None):
        """Initialize with the offending scale, if any.

        Args:
            message: Error message
            scale: Segment length (samples) that triggered the failure
        """
        super().__init__(message)
        self.scale = scale


def default_q_grid() -> np.ndarray:
    """q from -5 to 5 in steps of 0.25, without 0."""
    q = np.round(np.arange(-5.0, 5.0 + 1e-9, 0.25), 10)
    return q[q != 0]


def log_scales(scale_min: int, scale_max: int, n_scales: int) -> np.ndarray:
    """Logarithmically spaced integer scales, deduplicated after rounding."""
    raw = np.logspace(math.log10(scale_min), math.log10(scale_max), n_scales)
    return np.unique(np.round(raw).astype(int))


@dataclass
class MfdfaConfig:
    """q grid, scale range and detrending order."""

    q_grid: np.ndarray = field(default_factory=default_q_grid)
    scale_min: int = 10
    scale_max: int = 180
    n_scales: int = 21
    detrend_degree: int = 2
    scales: np.ndarray | None = None
    include_q0: bool = False
    correction_shuffles: int = 0

    def __post_init__(self) -> None:
        self.q_grid = np.asarray(self.q_grid, dtype=float)
        if self.scales is None:
            self.scales = log_scales(self.scale_min, self.scale_max, self.n_scales)
        else:
            self.scales = np.unique(np.asarray(self.scales, dtype=int))
            self.scale_min = int(self.scales[0])
            self.scale_max = int(self.scales[-1])
            self.n_scales = int(self.scales.size)
        self.validate()

    def validate(self) -> None:
        errors = []
        if np.any(self.q_grid == 0):
            errors.append("q_grid must not contain 0 (use include_q0)")
        if self.q_grid.size < 3:
            errors.append("q_grid needs at least 3 points")
        if np.any(np.diff(self.q_grid) <= 0):
            errors.append("q_grid must be strictly increasing")
        if self.detrend_degree < 1:
            errors.append("detrend_degree must be >= 1")
        if self.scales[0] < self.detrend_degree + 2:
            errors.append(f"scale_min must be >= detrend_degree + 2 ({self.detrend_degree + 2})")
        if self.scales.size < 4:
            errors.append("at least 4 distinct scales are required")
        if self.correction_shuffles < 0:
            errors.append("correction_shuffles must be >= 0")
        if errors:
            raise MfdfaError(f"Invalid MFDFA configuration: {', '.join(errors)}")

    @classmethod
    def from_dict(cls, data: dict) -> "MfdfaConfig":
        kwargs = {}
        for name in ("scale_min", "scale_max", "n_scales", "detrend_degree", "correction_shuffles"):
            if name in data:
                kwargs[name] = int(data[name])
        if "include_q0" in data:
            kwargs["include_q0"] = bool(data["include_q0"])
        if "q_grid" in data:
            kwargs["q_grid"] = np.asarray(data["q_grid"], dtype=float)
        elif {"q_min", "q_max", "q_step"} <= data.keys():
            q = np.arange(data["q_min"], data["q_max"] + 1e-9, data["q_step"])
            q = np.round(q, 10)
            kwargs["q_grid"] = q[q != 0]
        if "scales" in data:
            kwargs["scales"] = np.asarray(data["scales"], dtype=int)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "q_grid": self.q_grid.tolist(),
            "scales": self.scales.tolist(),
            "detrend_degree": self.detrend_degree,
            "include_q0": self.include_q0,
            "correction_shuffles": self.correction_shuffles,
        }


@dataclass
class FluctuationSurface:
    """F_q(s) over the (q, s) grid; rows follow q_grid, columns follow scales."""

    scales: np.ndarray
    q_grid: np.ndarray
    values: np.ndarray
    n_segments_per_scale: np.ndarray
    floored_variances: int = 0

    def row(self, q: float) -> np.ndarray:
        matches = np.flatnonzero(np.isclose(self.q_grid, q))
        if matches.size == 0:
            raise KeyError(f"q={q} not in the fluctuation surface")
        return self.values[matches[0]]


@dataclass
class GeneralizedHurst:
    """Scaling exponents h_q with regression diagnostics."""

    q_grid: np.ndarray
    h: np.ndarray
    stderr: np.ndarray
    r2: np.ndarray
    intercept: np.ndarray | None = None

    def at(self, q: float) -> tuple[float, float]:
        """(h_q, stderr) at one grid point."""
        matches = np.flatnonzero(np.isclose(self.q_grid, q))
        if matches.size == 0:
            raise MfdfaError(f"q={q} not in the q grid")
        i = matches[0]
        return float(self.h[i]), float(self.stderr[i])

    def nonzero(self) -> "GeneralizedHurst":
        """Exponents restricted to q != 0."""
        keep = self.q_grid != 0
        return GeneralizedHurst(
            q_grid=self.q_grid[keep],
            h=self.h[keep],
            stderr=self.stderr[keep],
            r2=self.r2[keep],
            intercept=None if self.intercept is None else self.intercept[keep],
        )


@dataclass
class MultifractalSpectrum:
    """tau(q) on the full grid; (alpha, f(alpha)) at interior q points."""

    q_grid: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    f_alpha: np.ndarray

    @property
    def alpha_q(self) -> np.ndarray:
        """q value behind every (alpha, f) pair."""
        return self.q_grid[1:-1]


@dataclass
class MultifractalSummary:
    """Spectrum landmarks and the summary parameters H, W and A."""

    H: float
    H_stderr: float
    W: float
    A: float
    alpha0: float
    alpha1: float
    alpha2: float
    fit_coeffs: np.ndarray
    delta_h: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "H_stderr": self.H_stderr,
            "W": self.W,
            "A": self.A,
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "delta_h": self.delta_h,
            "fit_coeffs": [float(c) for c in self.fit_coeffs],
        }


@dataclass
class MfdfaResult:
    """Everything ``analyze`` produces for one series."""

    surface: FluctuationSurface
    hurst: GeneralizedHurst
    spectrum: MultifractalSpectrum
    summary: MultifractalSummary

    def __iter__(self):
        return iter((self.surface, self.hurst, self.spectrum, self.summary))


def profile(x: np.ndarray) -> np.ndarray:
    """Cumulative sum of the mean-subtracted series."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise MfdfaError("Profile needs at least 2 samples")
    return np.cumsum(x - x.mean())


def _window_basis(s: int, m: int) -> np.ndarray:
    # Abscissae 1..s centred and scaled to [-1, 1] keep the Vandermonde well conditioned
    t = np.arange(1, s + 1, dtype=float)
    t = (t - (s + 1) / 2.0) / (s / 2.0)
    return np.vander(t, m + 1, increasing=True)


def segment_variances(Y: np.ndarray, s: int, m: int) -> np.ndarray:
    """Detrended variances of the forward and backward segmentations at scale ``s``.

    Args:
        Y: Profile
        s: Segment length in samples
        m: Degree of the detrending polynomial

    Returns:
        Array of length 2 N_s: forward segments first, then backward segments
        starting from the end of the profile

    Raises:
        MfdfaError: If the scale is too small for the degree or leaves fewer than 2 segments
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if s < m + 2:
        raise MfdfaError(f"Scale {s} too small for detrending degree {m}", scale=s)
    n_seg = n // s
    if n_seg < 2:
        raise MfdfaError(f"Scale {s} leaves {n_seg} segments of a {n}-sample profile", scale=s)

    forward = Y[: n_seg * s].reshape(n_seg, s)
    backward = Y[n - n_seg * s :].reshape(n_seg, s)[::-1]
    windows = np.concatenate([forward, backward]).T

    basis = _window_basis(s, m)
    coef, _, rank, _ = np.linalg.lstsq(basis, windows, rcond=None)
    if rank < m + 1:
        raise MfdfaError(f"Rank-deficient detrending fit at scale {s}", scale=s)
    residuals = windows - basis @ coef
    return np.sum(residuals**2, axis=0) / s


def fluctuation_function(
    variances: list[np.ndarray],
    q_grid: np.ndarray,
    scales: np.ndarray | None = None,
    include_q0: bool = False,
) -> FluctuationSurface:
    """q-order fluctuation functions from per-scale segment variances.

    Averages are taken in log space (log-sum-exp) so large |q| cannot overflow.
    q = 0 uses logarithmic averaging.

    Args:
        variances: One array of 2 N_s segment variances per scale
        q_grid: q values (0 allowed only through include_q0)
        scales: Segment lengths matching ``variances``
        include_q0: Insert q = 0 into the output rows

    Raises:
        MfdfaError: If every variance at some scale is zero
    """
    q_grid = np.asarray(q_grid, dtype=float)
    if include_q0 and not np.any(q_grid == 0):
        q_grid = np.sort(np.append(q_grid, 0.0))
    if scales is None:
        scales = np.arange(len(variances))

    values = np.empty((q_grid.size, len(variances)))
    counts = np.empty(len(variances), dtype=int)
    floored = 0
    for j, var in enumerate(variances):
        var = np.asarray(var, dtype=float)
        if not np.any(var > 0):
            raise MfdfaError(
                f"All segment variances vanish at scale {int(scales[j])}: degenerate series",
                scale=int(scales[j]),
            )
        hits = int(np.sum(var < VARIANCE_FLOOR))
        if hits:
            floored += hits
        log_var = np.log(np.maximum(var, VARIANCE_FLOOR))
        counts[j] = var.size
        log_n = math.log(var.size)
        for i, q in enumerate(q_grid):
            if q == 0:
                values[i, j] = math.exp(0.5 * float(np.mean(log_var)))
            else:
                log_mean = float(logsumexp(0.5 * q * log_var)) - log_n
                values[i, j] = math.exp(log_mean / q)

    if floored:
        logger.warning(f"{floored} segment variances floored at {VARIANCE_FLOOR}")

    return FluctuationSurface(
        scales=np.asarray(scales),
        q_grid=q_grid,
        values=values,
        n_segments_per_scale=counts,
        floored_variances=floored,
    )


def generalized_hurst(surface: FluctuationSurface) -> GeneralizedHurst:
    """Least-squares slopes of ln F_q(s) against ln s.

    Raises:
        MfdfaError: With fewer than 4 scales or a non-finite logarithm
    """
    scales = np.asarray(surface.scales, dtype=float)
    if scales.size < 4:
        raise MfdfaError(f"Need at least 4 scales, got {scales.size}")
    log_s = np.log(scales)

    n_q = surface.q_grid.size
    h = np.empty(n_q)
    stderr = np.empty(n_q)
    r2 = np.empty(n_q)
    intercept = np.empty(n_q)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = np.log(surface.values)
    for i in range(n_q):
        bad = np.flatnonzero(~np.isfinite(log_f[i]))
        if bad.size:
            scale = int(surface.scales[bad[0]])
            raise MfdfaError(
                f"Non-finite log F_q(s) at q={surface.q_grid[i]}, scale {scale}", scale=scale
            )
        fit = stats.linregress(log_s, log_f[i])
        h[i] = fit.slope
        stderr[i] = abs(fit.stderr) if np.isfinite(fit.stderr) else 0.0
        r2[i] = fit.rvalue**2 if np.isfinite(fit.rvalue) else 1.0
        intercept[i] = fit.intercept

    return GeneralizedHurst(
        q_grid=surface.q_grid.copy(), h=h, stderr=stderr, r2=r2, intercept=intercept
    )


def legendre_spectrum(gh: GeneralizedHurst) -> MultifractalSpectrum:
    """Mass exponents and singularity spectrum by Legendre transform.

    tau(q) = q h_q - 1, alpha = d tau / dq by central differences, and
    f(alpha) = q alpha - tau(q). Endpoint q values carry tau only.
    """
    gh = gh.nonzero()
    q = gh.q_grid
    if q.size < 3:
        raise MfdfaError("Legendre transform needs at least 3 q values")
    tau = q * gh.h - 1.0
    alpha = np.gradient(tau, q)[1:-1]
    f_alpha = q[1:-1] * alpha - tau[1:-1]
    return MultifractalSpectrum(q_grid=q, tau=tau, alpha=alpha, f_alpha=f_alpha)


def _bracketing_roots(coeffs: np.ndarray, alpha0: float) -> tuple[float | None, float | None]:
    """Nearest real roots of a polynomial below and above ``alpha0``.

    Roots farther than MAX_CROSSING_DISTANCE from alpha0 are ignored.
    """
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
    real = real[np.abs(real - alpha0) <= MAX_CROSSING_DISTANCE]
    below = real[real < alpha0]
    above = real[real > alpha0]
    return (
        float(below.max()) if below.size else None,
        float(above.min()) if above.size else None,
    )


def spectrum_summary(spec: MultifractalSpectrum, gh: GeneralizedHurst) -> MultifractalSummary:
    """Width, asymmetry and Hurst exponent from the singularity spectrum.

    f(alpha) is fitted with a 4th-order polynomial; alpha0 is its maximum over the data
    range and alpha1 < alpha0 < alpha2 are the nearest real roots of the fit on either
    side of alpha0, wherever they fall. A nearly monofractal spectrum covers only the top
    of its arc, so the roots usually lie well outside the data range. When the quartic
    turns back up before reaching zero on one side, the roots of a least-squares parabola
    through the same points are used for that side.

    Raises:
        MfdfaError: If the spectrum has fewer than 6 points, q = 2 is absent, the
            spectrum is flat or no root brackets alpha0
    """
    alpha = np.asarray(spec.alpha, dtype=float)
    f_alpha = np.asarray(spec.f_alpha, dtype=float)
    if alpha.size < 6:
        raise MfdfaError(f"Spectrum has {alpha.size} points, at least 6 are needed")
    H, H_stderr = gh.at(2.0)

    lo, hi = float(alpha.min()), float(alpha.max())
    if hi - lo <= 0 or np.ptp(f_alpha) <= _FLAT_SPREAD:
        raise MfdfaError("spectrum too flat or fit degenerate")

    coeffs = np.polyfit(alpha, f_alpha, 4)
    poly = np.poly1d(coeffs)

    grid = np.linspace(lo, hi, _SEARCH_POINTS)
    i_max = int(np.argmax(poly(grid)))
    bracket = (grid[max(i_max - 1, 0)], grid[min(i_max + 1, grid.size - 1)])
    refined = optimize.minimize_scalar(
        lambda a: -poly(a), bounds=bracket, method="bounded", options={"xatol": 1e-12}
    )
    alpha0 = float(refined.x) if poly(refined.x) >= poly(grid[i_max]) else float(grid[i_max])
    if poly(alpha0) <= 0:
        raise MfdfaError("spectrum too flat or fit degenerate")

    alpha1, alpha2 = _bracketing_roots(coeffs, alpha0)
    if alpha1 is None or alpha2 is None:
        parabola = np.polyfit(alpha, f_alpha, 2)
        if parabola[0] < 0:
            low, high = _bracketing_roots(parabola, alpha0)
            logger.debug(f"Quartic fit lacks a root beside alpha0={alpha0:.4f}; using parabola")
            alpha1 = low if alpha1 is None else alpha1
            alpha2 = high if alpha2 is None else alpha2
    if alpha1 is None or alpha2 is None:
        raise MfdfaError("spectrum too flat or fit degenerate")

    width = alpha2 - alpha1
    asymmetry = (alpha0 - alpha1) / (alpha2 - alpha0)
    h_nonzero = gh.nonzero().h
    return MultifractalSummary(
        H=H,
        H_stderr=H_stderr,
        W=width,
        A=asymmetry,
        alpha0=alpha0,
        alpha1=alpha1,
        alpha2=alpha2,
        fit_coeffs=coeffs,
        delta_h=float(h_nonzero.max() - h_nonzero.min()),
    )


def _raw_surface(x: np.ndarray, cfg: MfdfaConfig) -> FluctuationSurface:
    Y = profile(x)
    variances = [segment_variances(Y, int(s), cfg.detrend_degree) for s in cfg.scales]
    return fluctuation_function(variances, cfg.q_grid, cfg.scales, include_q0=cfg.include_q0)


def small_scale_correction(x: np.ndarray, cfg: MfdfaConfig) -> np.ndarray:
    """Finite-size correction factors K_q(s) estimated from shuffled copies of ``x``.

    K_q(s) = Fs_q(s) / Fs_q(s_max) * sqrt(s_max / s), where Fs_q is the root mean square
    of F_q over ``cfg.correction_shuffles`` shuffles (shuffle i uses seed i). A shuffled
    series has h = 1/2, so K measures how far the detrending pulls F_q(s) below the
    s**(1/2) law at small scales. K is 1 at the largest scale.

    Returns:
        Array shaped like the fluctuation surface
    """
    x = np.asarray(x, dtype=float)
    squares = None
    for i in range(cfg.correction_shuffles):
        shuffled = np.random.default_rng(i).permutation(x)
        values = _raw_surface(shuffled, cfg).values ** 2
        squares = values if squares is None else squares + values
    if squares is None:
        raise MfdfaError("small_scale_correction needs correction_shuffles >= 1")
    rms = np.sqrt(squares / cfg.correction_shuffles)
    scales = np.asarray(cfg.scales, dtype=float)
    return rms / rms[:, -1:] * np.sqrt(scales[-1] / scales)


def fluctuation_surface(x: np.ndarray, cfg: MfdfaConfig) -> FluctuationSurface:
    """Profile, segment variances and F_q(s) for one series.

    With ``cfg.correction_shuffles`` > 0 every F_q(s) is divided by its small-scale
    correction factor.
    """
    surface = _raw_surface(x, cfg)
    if cfg.correction_shuffles:
        surface.values = surface.values / small_scale_correction(x, cfg)
    return surface


def analyze(ts: TimeSeries, cfg: MfdfaConfig | None = None) -> MfdfaResult:
    """Run the full MFDFA chain on a series.

    Raises:
        MfdfaError: If the series is shorter than twice the largest scale, or any step fails
    """
    cfg = cfg or MfdfaConfig()
    n = len(ts)
    if n < 2 * int(cfg.scales[-1]):
        raise MfdfaError(
            f"Series {ts.station_id} has {n} samples; largest scale {cfg.scales[-1]} "
            f"needs at least {2 * int(cfg.scales[-1])}",
            scale=int(cfg.scales[-1]),
        )

    surface = fluctuation_surface(ts.values, cfg)
    hurst = generalized_hurst(surface)
    spectrum = legendre_spectrum(hurst)
    summary = spectrum_summary(spectrum, hurst)
    logger.debug(
        f"MFDFA {ts.station_id}: H={summary.H:.4f}±{summary.H_stderr:.4f} "
        f"W={summary.W:.4f} A={summary.A:.4f}"
    )
    return MfdfaResult(surface=surface, hurst=hurst, spectrum=spectrum, summary=summary)
