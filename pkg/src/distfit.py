"""Parametric distribution fitting and ranking by Kullback-Leibler divergence."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats
from scipy.integrate import trapezoid

from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

WEIBULL = "Weibull"
GAMMA = "Gamma"
GEV = "GEV"
FAMILIES = (WEIBULL, GAMMA, GEV)

MIN_SAMPLE_SIZE = 30
MAX_ITERATIONS = 500
GRID_POINTS = 512

# p below this is treated as outside the empirical support; q is floored to stay finite
P_FLOOR = 1e-12
Q_FLOOR = 1e-300


class FitError(Exception):
    """Exception raised when a distribution cannot be fitted."""

    def __init__(self, message: str, family: str, last_params: dict | None = None):
        """Initialize with the family and the optimizer's last iterate.

        Args:
            message: Error message
            family: Distribution family being fitted
            last_params: Parameters at the last optimizer iterate, if any
        """
        super().__init__(message)
        self.family = family
        self.last_params = last_params


@dataclass
class DistributionFit:
    """Fitted parameters of one family.

    Parameter names: Weibull ``k`` (shape), ``lambda`` (scale); Gamma ``alpha`` (shape),
    ``beta`` (rate); GEV ``mu`` (location), ``sigma`` (scale), ``xi`` (shape).
    """

    family: str
    params: dict[str, float]
    log_likelihood: float = float("nan")
    sample_size: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown family '{self.family}'")
        if not all(math.isfinite(v) for v in self.params.values()):
            raise ValueError(f"Non-finite parameters for {self.family}: {self.params}")
        positive = {WEIBULL: ("k", "lambda"), GAMMA: ("alpha", "beta"), GEV: ("sigma",)}
        for name in positive[self.family]:
            if self.params[name] <= 0:
                raise ValueError(f"{self.family} parameter {name} must be positive")

    def frozen(self):
        """Equivalent scipy.stats frozen distribution."""
        p = self.params
        if self.family == WEIBULL:
            return stats.weibull_min(c=p["k"], scale=p["lambda"])
        if self.family == GAMMA:
            return stats.gamma(a=p["alpha"], scale=1.0 / p["beta"])
        # scipy's shape c is the negated GEV shape
        return stats.genextreme(c=-p["xi"], loc=p["mu"], scale=p["sigma"])

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "log_likelihood": self.log_likelihood,
            "sample_size": self.sample_size,
        }


@dataclass
class EmpiricalDensity:
    """Kernel density estimate of a sample on an evaluation grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(trapezoid(self.density, self.grid))


@dataclass
class RankedFamily:
    """One entry of a distribution ranking."""

    family: str
    kl: float
    fit: DistributionFit | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.fit.params if self.fit else None,
            "log_likelihood": self.fit.log_likelihood if self.fit else None,
            "kl": self.kl if math.isfinite(self.kl) else None,
            "error": self.error,
        }


@dataclass
class DistributionRanking:
    """Families ordered by ascending KL divergence from the empirical density."""

    station_id: str
    entries: list[RankedFamily] = field(default_factory=list)

    @property
    def best_family(self) -> str | None:
        if self.entries and self.entries[0].error is None:
            return self.entries[0].family
        return None

    def as_pairs(self) -> list[tuple[str, float]]:
        return [(e.family, e.kl) for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "fits": [e.to_dict() for e in self.entries],
            "best_family": self.best_family,
        }


def density(fit: DistributionFit, x: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the fitted density; zero outside the family's support."""
    values = fit.frozen().pdf(x)
    values = np.where(np.isfinite(values), values, 0.0)
    return float(values) if np.ndim(values) == 0 else values


def _negative_log_likelihood(family: str, theta: np.ndarray, sample: np.ndarray) -> float:
    fit_params = _unpack(family, theta)
    if fit_params is None:
        return np.inf
    p = fit_params
    if family == WEIBULL:
        logpdf = stats.weibull_min.logpdf(sample, p["k"], scale=p["lambda"])
    elif family == GAMMA:
        logpdf = stats.gamma.logpdf(sample, p["alpha"], scale=1.0 / p["beta"])
    else:
        logpdf = stats.genextreme.logpdf(sample, -p["xi"], loc=p["mu"], scale=p["sigma"])
    total = float(np.sum(logpdf))
    return -total if math.isfinite(total) else np.inf


# Positive parameters are searched on a log scale so the simplex stays unconstrained
def _pack(family: str, params: dict[str, float]) -> np.ndarray:
    if family == WEIBULL:
        return np.log([params["k"], params["lambda"]])
    if family == GAMMA:
        return np.log([params["alpha"], params["beta"]])
    return np.array([params["mu"], math.log(params["sigma"]), params["xi"]])


def _unpack(family: str, theta: np.ndarray) -> dict[str, float] | None:
    if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 700):
        return None
    if family == WEIBULL:
        return {"k": math.exp(theta[0]), "lambda": math.exp(theta[1])}
    if family == GAMMA:
        return {"alpha": math.exp(theta[0]), "beta": math.exp(theta[1])}
    return {"mu": float(theta[0]), "sigma": math.exp(theta[1]), "xi": float(theta[2])}


def moment_initial_params(sample: np.ndarray, family: str) -> dict[str, float]:
    """Moment-based starting values for the likelihood search."""
    if family == WEIBULL:
        logs = np.log(sample)
        sd = float(np.std(logs, ddof=1))
        k = math.pi / (sd * math.sqrt(6.0)) if sd > 0 else 1.0
        scale = math.exp(float(np.mean(logs)) + np.euler_gamma / k)
        return {"k": k, "lambda": scale}
    if family == GAMMA:
        mean = float(np.mean(sample))
        var = float(np.var(sample, ddof=1))
        var = var if var > 0 else mean**2 * 1e-6
        return {"alpha": mean**2 / var, "beta": mean / var}
    return _gev_pwm_params(sample)


def _gev_pwm_params(sample: np.ndarray) -> dict[str, float]:
    """GEV starting values from probability-weighted moments (Hosking et al., 1985)."""
    x = np.sort(sample)
    n = x.size
    j = np.arange(n)
    b0 = float(x.mean())
    b1 = float(np.sum(j * x) / (n * (n - 1)))
    b2 = float(np.sum(j * (j - 1) * x) / (n * (n - 1) * (n - 2)))
    l2 = 2.0 * b1 - b0
    if l2 <= 0:
        return {"mu": b0, "sigma": max(float(np.std(x)), 1e-6), "xi": 0.0}
    c = l2 / (3.0 * b2 - b0) - math.log(2.0) / math.log(3.0)
    k = 7.8590 * c + 2.9554 * c**2
    if abs(k) < 1e-6:
        sigma = l2 / math.log(2.0)
        return {"mu": b0 - np.euler_gamma * sigma, "sigma": sigma, "xi": 0.0}
    g = special.gamma(1.0 + k)
    sigma = l2 * k / (g * (1.0 - 2.0 ** (-k)))
    mu = b0 + sigma * (g - 1.0) / k
    return {"mu": float(mu), "sigma": float(sigma), "xi": float(-k)}


def fit_mle(sample: np.ndarray, family: str) -> DistributionFit:
    """Maximum likelihood fit by Nelder-Mead simplex search from moment estimates.

    Args:
        sample: Observations (strictly positive for Weibull and Gamma)
        family: One of ``FAMILIES``

    Returns:
        Fitted distribution with its log-likelihood

    Raises:
        FitError: On invalid samples or if the simplex fails to converge
    """
    sample = np.asarray(sample, dtype=float)
    if family not in FAMILIES:
        raise FitError(f"Unknown family '{family}'", family)
    if sample.size < MIN_SAMPLE_SIZE:
        raise FitError(
            f"{family} fit needs at least {MIN_SAMPLE_SIZE} samples, got {sample.size}", family
        )
    if not np.all(np.isfinite(sample)):
        raise FitError("Sample contains non-finite values", family)
    if family in (WEIBULL, GAMMA) and np.any(sample <= 0):
        raise FitError(f"{family} requires strictly positive samples", family)

    initial = moment_initial_params(sample, family)
    theta0 = _pack(family, initial)
    nll0 = _negative_log_likelihood(family, theta0, sample)
    if family == GEV and not math.isfinite(nll0):
        # Gumbel start has unbounded support, so every observation has finite likelihood
        initial = {**initial, "xi": 0.0}
        theta0 = _pack(family, initial)
        nll0 = _negative_log_likelihood(family, theta0, sample)
    if not math.isfinite(nll0):
        raise FitError(f"{family} likelihood undefined at starting values", family, initial)

    result = optimize.minimize(
        lambda theta: _negative_log_likelihood(family, theta, sample),
        theta0,
        method="Nelder-Mead",
        options={
            "maxiter": MAX_ITERATIONS,
            "xatol": 1e-5,
            "fatol": 1e-9 * abs(nll0) + 1e-9,
        },
    )

    params = _unpack(family, result.x)
    if not result.success or params is None or not math.isfinite(result.fun):
        raise FitError(
            f"{family} likelihood search did not converge after {result.nit} iterations: "
            f"{result.message}",
            family,
            params,
        )

    fit = DistributionFit(
        family=family, params=params, log_likelihood=-float(result.fun), sample_size=sample.size
    )
    logger.debug(f"{family} fit: {params} (logL={fit.log_likelihood:.6g}, nit={result.nit})")
    return fit


def empirical_density(sample: np.ndarray, n_points: int = GRID_POINTS) -> EmpiricalDensity:
    """Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth.

    The grid spans 3 bandwidths beyond the sample range. For a nonnegative sample it is
    clipped to start half a grid step above 0.
    """
    sample = np.asarray(sample, dtype=float)
    n = sample.size
    sd = float(np.std(sample, ddof=1))
    iqr = float(np.subtract(*np.percentile(sample, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bandwidth = 0.9 * spread * n ** (-0.2)
    if not bandwidth > 0:
        raise FitError("Sample has no spread, density is degenerate", "empirical")

    lower = sample.min() - 3.0 * bandwidth
    upper = sample.max() + 3.0 * bandwidth
    if sample.min() >= 0 and lower < 0:
        # Weibull and Gamma densities are 0 or infinite at x = 0, so start half a step above it
        lower = 0.5 * upper / (n_points - 0.5)
    grid = np.linspace(lower, upper, n_points)

    kde = stats.gaussian_kde(sample, bw_method=bandwidth / sd)
    return EmpiricalDensity(grid=grid, density=kde(grid), bandwidth=bandwidth)


def kl_divergence(p: EmpiricalDensity, fit: DistributionFit) -> float:
    """Kullback-Leibler divergence of a fitted density from an empirical one.

    Trapezoid quadrature of p ln(p/q) over the empirical grid, restricted to p > 1e-12.
    """
    q = np.maximum(density(fit, p.grid), Q_FLOOR)
    mask = p.density > P_FLOOR
    integrand = np.zeros_like(p.density)
    integrand[mask] = p.density[mask] * np.log(p.density[mask] / q[mask])
    return float(trapezoid(integrand, p.grid))


def rank_distributions(ts: TimeSeries) -> DistributionRanking:
    """Fit every family to a series and rank by ascending KL divergence.

    A family whose fit fails is placed last with its error recorded.
    """
    sample = ts.values
    p = empirical_density(sample)

    ranked: list[RankedFamily] = []
    failed: list[RankedFamily] = []
    for family in FAMILIES:
        try:
            fit = fit_mle(sample, family)
            ranked.append(RankedFamily(family=family, kl=kl_divergence(p, fit), fit=fit))
        except FitError as e:
            logger.warning(f"Station {ts.station_id}: {family} fit failed: {e}")
            failed.append(RankedFamily(family=family, kl=float("inf"), error=str(e)))

    ranked.sort(key=lambda entry: entry.kl)
    ranking = DistributionRanking(station_id=ts.station_id, entries=ranked + failed)
    logger.info(
        f"Station {ts.station_id}: distribution ranking "
        + ", ".join(f"{e.family}={e.kl:.4g}" for e in ranking.entries)
    )
    return ranking
