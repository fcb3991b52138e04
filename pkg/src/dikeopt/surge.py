"""Extreme-value engine for storm surge anomalies.

Annual block maxima are detrended against each year's mean level and fitted
to the generalized extreme value (GEV) distribution, by maximum likelihood
(with observed-information standard errors) and by random-walk
Metropolis-Hastings sampling of the posterior. Return-level curves up to the
1/10,000 return period carry either delta-method confidence intervals (MLE)
or highest-posterior-density credible intervals (MCMC).

Levels are in the record's native units (mm). Shape values within 1e-8 of
zero use the analytic Gumbel limit, where the general formulas are singular.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError

__all__ = [
    "GevParams",
    "McmcChain",
    "ReturnLevelCurve",
    "block_maxima",
    "gev_cdf",
    "gev_pdf",
    "gev_log_likelihood",
    "gev_quantile",
    "return_level",
    "fit_gev_mle",
    "mcmc_gev",
    "hpd_interval",
    "return_level_posterior",
    "return_level_mle",
    "semilog_fit",
    "semilog_return_level",
]

GUMBEL_SHAPE_EPS = 1e-8
_EULER_MASCHERONI = 0.5772156649015329


@dataclass(frozen=True)
class GevParams:
    """GEV location/scale/shape, with optional standard errors and covariance."""

    location: float  # mm
    scale: float  # mm
    shape: float
    se: tuple[float, float, float] | None = None
    covariance: np.ndarray | None = None  # 3x3, (location, scale, shape) order

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def block_maxima(series, min_observations: int = 1):
    """Annual detrended maxima: per-year max minus that year's mean level.

    Years with fewer than `min_observations` readings are dropped. Returns
    (years, maxima) as arrays. Detrending against the annual mean removes
    long-term variability, so a trend in the record does not shift the maxima.
    """
    years, groups = series.observations_by_year()
    keep_years, maxima = [], []
    for year, levels in zip(years, groups):
        if levels.size < min_observations:
            continue
        keep_years.append(year)
        maxima.append(levels.max() - levels.mean())
    if not keep_years:
        raise ValueError("no usable years after applying the observation floor")
    return np.asarray(keep_years, dtype=int), np.asarray(maxima, dtype=float)


def _gev_cdf_raw(x, mu, sigma, xi):
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    if abs(xi) < GUMBEL_SHAPE_EPS:
        return np.exp(-np.exp(-z))
    s = 1.0 + xi * z
    off = 0.0 if xi > 0 else 1.0  # below the lower endpoint vs above the upper one
    with np.errstate(invalid="ignore", over="ignore"):
        F = np.where(s > 0, np.exp(-np.power(np.where(s > 0, s, 1.0), -1.0 / xi)), off)
    return F


def gev_cdf(x, p: GevParams):
    """GEV cumulative distribution, 0/1 outside the support."""
    F = _gev_cdf_raw(x, p.location, p.scale, p.shape)
    return float(F) if F.ndim == 0 else F


def gev_exceedance(x, mu, sigma, xi) -> np.ndarray:
    """P(X > x) with full numpy broadcasting over the parameters.

    Vectorized across states of the world where each row carries its own
    (mu, sigma, xi); off-support levels map to exceedance 1 (below a lower
    endpoint) or 0 (above an upper endpoint).
    """
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    gumbel = np.abs(xi) < GUMBEL_SHAPE_EPS
    xi_safe = np.where(gumbel, 1.0, xi)
    s = 1.0 + xi_safe * z
    with np.errstate(over="ignore", invalid="ignore"):
        general = np.exp(-np.power(np.where(s > 0, s, 1.0), -1.0 / xi_safe))
        limit = np.exp(-np.exp(-z))
    F = np.where(gumbel, limit, np.where(s > 0, general, np.where(xi_safe > 0, 0.0, 1.0)))
    return 1.0 - F


def gev_pdf(x, p: GevParams):
    """GEV density; zero off-support."""
    x = np.asarray(x, dtype=float)
    z = (x - p.location) / p.scale
    xi = p.shape
    if abs(xi) < GUMBEL_SHAPE_EPS:
        d = np.exp(-z - np.exp(-z)) / p.scale
    else:
        s = 1.0 + xi * z
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            safe = np.where(s > 0, s, 1.0)
            d = np.where(
                s > 0,
                np.power(safe, -1.0 - 1.0 / xi) * np.exp(-np.power(safe, -1.0 / xi)) / p.scale,
                0.0,
            )
    return float(d) if d.ndim == 0 else d


def _gev_loglik(x: np.ndarray, mu: float, sigma: float, xi: float) -> float:
    """Log-likelihood; -inf for invalid scale or off-support observations."""
    if sigma <= 0 or not np.isfinite(sigma):
        return -math.inf
    z = (x - mu) / sigma
    n = x.size
    if abs(xi) < GUMBEL_SHAPE_EPS:
        return float(-n * math.log(sigma) - np.sum(z) - np.sum(np.exp(-z)))
    s = 1.0 + xi * z
    if np.any(s <= 0):
        return -math.inf
    logs = np.log(s)
    return float(-n * math.log(sigma) - (1.0 + 1.0 / xi) * np.sum(logs) - np.sum(np.exp(-logs / xi)))


def gev_log_likelihood(maxima, p: GevParams) -> float:
    """Sum of log densities; -inf if any observation is off-support."""
    return _gev_loglik(np.asarray(maxima, dtype=float), p.location, p.scale, p.shape)


def gev_quantile(p_level, p: GevParams):
    """Level exceeded with probability 1 - p_level (the p_level quantile)."""
    u = np.asarray(p_level, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("p_level must lie strictly inside (0, 1)")
    y = -np.log(u)
    if abs(p.shape) < GUMBEL_SHAPE_EPS:
        q = p.location - p.scale * np.log(y)
    else:
        q = p.location + p.scale / p.shape * (np.power(y, -p.shape) - 1.0)
    return float(q) if q.ndim == 0 else q


def return_level(T, p: GevParams):
    """Level of the T-year return period event."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 1.0):
        raise ValueError("return period must exceed 1 year")
    return gev_quantile(1.0 - 1.0 / T, p)


def _fd_hessian(f, x0: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian; shrinks steps that leave the domain."""
    k = x0.size
    h = np.maximum(np.abs(x0) * rel_step, 1e-7)
    H = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            hi, hj = h[i], h[j]
            for _ in range(8):
                ei = np.zeros(k)
                ej = np.zeros(k)
                ei[i], ej[j] = hi, hj
                if i == j:
                    vals = [f(x0 + 2 * ei), f(x0), f(x0 - 2 * ei)]
                    if all(np.isfinite(vals)):
                        H[i, i] = (vals[0] - 2 * vals[1] + vals[2]) / (4 * hi * hi)
                        break
                else:
                    vals = [f(x0 + ei + ej), f(x0 + ei - ej), f(x0 - ei + ej), f(x0 - ei - ej)]
                    if all(np.isfinite(vals)):
                        H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * hi * hj)
                        break
                hi, hj = hi / 4.0, hj / 4.0
            else:
                raise NumericalError("Hessian estimation failed: likelihood not finite near optimum")
    return H


def fit_gev_mle(maxima, min_count: int = 20, restarts: int = 5) -> GevParams:
    """Maximum-likelihood GEV fit with observed-information standard errors.

    Optimizes over (location, log scale, shape) with a derivative-free simplex
    from a moment-based Gumbel start plus perturbed restarts. Raises
    NumericalError on degenerate samples, non-convergence, or a singular
    information matrix.
    """
    x = np.asarray(maxima, dtype=float)
    if x.size < min_count:
        raise ValueError(f"need at least {min_count} block maxima, got {x.size}")
    sd = float(x.std())
    if sd == 0.0:
        raise NumericalError("degenerate sample: all block maxima are equal (scale -> 0)")

    sigma0 = sd * math.sqrt(6.0) / math.pi
    mu0 = float(x.mean()) - _EULER_MASCHERONI * sigma0

    def nll(theta):
        mu, log_sigma, xi = theta
        return -_gev_loglik(x, mu, math.exp(log_sigma), xi)

    starts = [(mu0, math.log(sigma0), xi0) for xi0 in (0.1, -0.1, 0.0, 0.2, -0.2)][:restarts]
    best = None
    for start in starts:
        res = minimize(nll, np.asarray(start), method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 5000})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None or not np.isfinite(best.fun):
        raise NumericalError("GEV fit failed to converge from any start")

    mu, sigma, xi = best.x[0], math.exp(best.x[1]), best.x[2]
    if not np.isfinite(_gev_loglik(x, mu, sigma, xi)):
        raise NumericalError("GEV fit landed off-support for some observation")

    def nll_natural(theta):
        return -_gev_loglik(x, theta[0], theta[1], theta[2])

    H = _fd_hessian(nll_natural, np.array([mu, sigma, xi]))
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular observed-information matrix: {exc}") from exc
    diag = np.diag(cov)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericalError(
            f"observed information not positive definite at the optimum "
            f"(mu={mu:.4g}, sigma={sigma:.4g}, xi={xi:.4g})"
        )
    se = tuple(float(v) for v in np.sqrt(diag))
    return GevParams(location=float(mu), scale=float(sigma), shape=float(xi), se=se, covariance=cov)


@dataclass(frozen=True)
class McmcChain:
    """Posterior samples (post burn-in) of (location, scale, shape)."""

    samples: np.ndarray  # (n, 3)
    acceptance_rate: float
    burn_in: int

    def __post_init__(self):
        if not 0.0 < self.acceptance_rate < 1.0:
            raise NumericalError(
                f"degenerate chain: acceptance rate {self.acceptance_rate} outside (0, 1)"
            )

    @property
    def location(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def scale(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def shape(self) -> np.ndarray:
        return self.samples[:, 2]


def mcmc_gev(
    maxima,
    init: GevParams,
    iterations: int = 100_000,
    seed: int = 0,
    rng: np.random.Generator | None = None,
    prior_sd_multiplier: float = 10.0,
    proposal_scale: Sequence[float] | None = None,
    burn_in_fraction: float = 0.1,
    stream: str = "mcmc",
) -> McmcChain:
    """Random-walk Metropolis-Hastings over the GEV parameters.

    The target is likelihood times independent normal priors centered at the
    supplied fit, with prior standard deviations `prior_sd_multiplier` times
    the fit's standard errors (weakly informative). Proposal scales start at
    2.4/sqrt(3) times the standard errors and adapt during the discarded
    burn-in (first `burn_in_fraction` of iterations), then stay frozen.
    Deterministic for a fixed seed.
    """
    from .rng import substream

    x = np.asarray(maxima, dtype=float)
    if init.se is None:
        raise ValueError("init must carry standard errors (run fit_gev_mle first)")
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    prior_mean = np.array([init.location, init.scale, init.shape])
    prior_sd = prior_sd_multiplier * np.asarray(init.se, dtype=float)
    if np.any(prior_sd <= 0):
        raise ValueError(f"prior standard deviations must be positive, got {prior_sd}")
    scales = (
        np.asarray(proposal_scale, dtype=float)
        if proposal_scale is not None
        else 2.4 / math.sqrt(3.0) * np.asarray(init.se, dtype=float)
    )
    if np.any(scales <= 0):
        raise ValueError(f"proposal scales must be positive, got {scales}")
    if rng is None:
        rng = substream(seed, stream)

    def log_post(theta):
        ll = _gev_loglik(x, theta[0], theta[1], theta[2])
        if not np.isfinite(ll):
            return -math.inf
        return ll - 0.5 * float(np.sum(((theta - prior_mean) / prior_sd) ** 2))

    burn_in = int(iterations * burn_in_fraction)
    current = prior_mean.copy()
    lp = log_post(current)
    if not np.isfinite(lp):
        raise NumericalError("initial parameters have zero posterior density")

    kept = np.empty((iterations - burn_in, 3))
    accepted_post = 0
    window_accepts = 0
    adapt_window = 100
    for it in range(iterations):
        prop = current + rng.normal(0.0, scales)
        lp_prop = log_post(prop)
        if math.log(rng.random()) < lp_prop - lp:
            current, lp = prop, lp_prop
            if it >= burn_in:
                accepted_post += 1
            else:
                window_accepts += 1
        if it < burn_in and (it + 1) % adapt_window == 0:
            rate = window_accepts / adapt_window
            scales = scales * float(np.clip(math.exp(1.5 * (rate - 0.3)), 0.5, 2.0))
            window_accepts = 0
        if it >= burn_in:
            kept[it - burn_in] = current

    rate = accepted_post / (iterations - burn_in)
    if not 0.05 < rate < 0.8:
        warnings.warn(
            f"MCMC acceptance rate {rate:.3f} outside (0.05, 0.8); consider retuning the proposal",
            RuntimeWarning,
            stacklevel=2,
        )
    return McmcChain(samples=kept, acceptance_rate=rate, burn_in=burn_in)


def hpd_interval(samples, level: float) -> tuple[float, float]:
    """Shortest contiguous interval holding ceil(level * n) sorted samples.

    Equal-width candidates resolve to the leftmost interval.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    m = int(math.ceil(level * x.size))
    if m >= x.size:
        return float(x[0]), float(x[-1])
    widths = x[m - 1 :] - x[: x.size - m + 1]
    i = int(np.argmin(widths))  # argmin returns the first (leftmost) minimum
    return float(x[i]), float(x[i + m - 1])


@dataclass(frozen=True)
class ReturnLevelCurve:
    """Expected levels and uncertainty bands over a set of return periods."""

    return_periods: np.ndarray
    expected: np.ndarray  # mm
    lo90: np.ndarray
    hi90: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    kind: str  # "credible" (MCMC/HPD) or "confidence" (MLE/delta method)


def return_level_posterior(chain: McmcChain, return_periods) -> ReturnLevelCurve:
    """Posterior mean return levels with 90%/95% HPD bands (the MCMC curve)."""
    Ts = np.asarray(return_periods, dtype=float)
    expected = np.empty_like(Ts)
    lo90 = np.empty_like(Ts)
    hi90 = np.empty_like(Ts)
    lo95 = np.empty_like(Ts)
    hi95 = np.empty_like(Ts)
    mu, sig, xi = chain.location, chain.scale, chain.shape
    for i, T in enumerate(Ts):
        y = -math.log1p(-1.0 / T)
        gumbel = np.abs(xi) < GUMBEL_SHAPE_EPS
        with np.errstate(over="ignore"):
            levels = np.where(
                gumbel,
                mu - sig * math.log(y),
                mu + sig / np.where(gumbel, 1.0, xi) * (y ** -xi - 1.0),
            )
        expected[i] = levels.mean()
        lo90[i], hi90[i] = hpd_interval(levels, 0.90)
        lo95[i], hi95[i] = hpd_interval(levels, 0.95)
    return ReturnLevelCurve(Ts, expected, lo90, hi90, lo95, hi95, kind="credible")


def return_level_mle(fit: GevParams, return_periods) -> ReturnLevelCurve:
    """Return levels at the MLE with delta-method confidence bands."""
    if fit.covariance is None:
        raise ValueError("fit must carry a covariance matrix (run fit_gev_mle first)")
    Ts = np.asarray(return_periods, dtype=float)
    expected = np.empty_like(Ts)
    ses = np.empty_like(Ts)
    xi, sigma = fit.shape, fit.scale
    for i, T in enumerate(Ts):
        y = -math.log1p(-1.0 / T)
        L = math.log(y)
        expected[i] = return_level(T, fit)
        if abs(xi) < GUMBEL_SHAPE_EPS:
            grad = np.array([1.0, -L, sigma * L * L / 2.0])
        else:
            yx = y ** -xi
            grad = np.array(
                [1.0, (yx - 1.0) / xi, -sigma / (xi * xi) * (yx - 1.0) - sigma / xi * yx * L]
            )
        var = float(grad @ fit.covariance @ grad)
        ses[i] = math.sqrt(max(var, 0.0))
    z90, z95 = 1.6448536269514722, 1.959963984540054
    return ReturnLevelCurve(
        Ts,
        expected,
        expected - z90 * ses,
        expected + z90 * ses,
        expected - z95 * ses,
        expected + z95 * ses,
        kind="confidence",
    )


def semilog_fit(maxima) -> tuple[float, float]:
    """Least-squares line through (level, log exceedance) plotting positions.

    Exceedance probabilities use Weibull plotting positions j/(n+1) over the
    annual maxima sorted descending. Returns (intercept, slope) of
    log p = intercept + slope * level. This is the classic semi-log
    extrapolation kept as a comparison baseline for the GEV fits.
    """
    x = np.sort(np.asarray(maxima, dtype=float))[::-1]
    if x.size < 3:
        raise ValueError("need at least 3 maxima for the semi-log baseline")
    p = np.arange(1, x.size + 1, dtype=float) / (x.size + 1)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, np.log(p), rcond=None)
    return float(coef[0]), float(coef[1])


def semilog_return_level(fit: tuple[float, float], T) -> np.ndarray | float:
    """Level whose fitted exceedance frequency is 1/T under the semi-log line."""
    c0, c1 = fit
    if c1 >= 0:
        raise NumericalError("semi-log fit has nonnegative slope; extrapolation undefined")
    T = np.asarray(T, dtype=float)
    out = (np.log(1.0 / T) - c0) / c1
    return float(out) if out.ndim == 0 else out
