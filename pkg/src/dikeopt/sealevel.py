"""Sea-level trend model, residual bootstrap, and expert-assessment calibration.

The mean sea-level curve is quadratic in time with an optional abrupt-rise
term: a + b*t + c*t^2 plus a post-onset rate increase. The abrupt term is a
ramp in level, c_star * max(0, t - t_star) (a rate increase integrates to a
ramp); a step-in-level alternative is available for sensitivity checks.

Time t is measured in years since the reference year (the final observation
year of the ingested record). Fitting happens in the record's native units
(mm); projections and calibrated parameters are kept in meters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .rng import substream
from .uncertainty import PriorSpec, prior_pdf

__all__ = [
    "SlrParams",
    "QuadraticFit",
    "slr_project",
    "fit_polynomial",
    "lag1_autocorrelation",
    "bootstrap_hindcasts",
    "rejection_calibrate",
]


@dataclass(frozen=True)
class SlrParams:
    """Sea-level parameter bundle. t_star is years after the reference year.

    eta (land subsidence) and phi (baseline linear rise rate, used by the
    model versions without a fitted curve) ride along so one object carries
    everything sea-level-related; slr_project uses only a/b/c/c_star/t_star.
    """

    a: float  # meters, level at the reference year
    b: float  # meters/year
    c: float  # meters/year^2
    c_star: float = 0.0  # meters/year rate increase after onset
    t_star: float = 0.0  # onset, years after reference
    abrupt_mode: str = "ramp"  # "ramp" (rate increase) or "step" (level jump)
    eta: float = 0.002  # meters/year land subsidence
    phi: float = 0.008  # meters/year linear rise rate (simple versions)

    def __post_init__(self):
        if self.c_star < 0:
            raise ValueError(f"c_star must be >= 0, got {self.c_star}")
        if self.t_star < 0:
            raise ValueError(f"t_star must be >= 0 (within the projection window), got {self.t_star}")
        if self.abrupt_mode not in ("ramp", "step"):
            raise ValueError(f"abrupt_mode must be 'ramp' or 'step', got {self.abrupt_mode!r}")


def slr_project(p: SlrParams, t) -> np.ndarray | float:
    """Mean sea level at t years after the reference year."""
    t = np.asarray(t, dtype=float)
    level = p.a + p.b * t + p.c * t * t
    if p.c_star != 0.0:
        if p.abrupt_mode == "ramp":
            level = level + p.c_star * np.maximum(0.0, t - p.t_star)
        else:
            level = level + p.c_star * (t > p.t_star)
    return float(level) if level.ndim == 0 else level


@dataclass(frozen=True)
class QuadraticFit:
    """Least-squares quadratic trend and its residuals."""

    a: float
    b: float
    c: float
    residuals: np.ndarray

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a + self.b * t + self.c * t * t


def fit_polynomial(t, levels) -> QuadraticFit:
    """Fit a 2nd-order polynomial to annual mean levels by least squares.

    t: years since the reference year (may be negative for the hindcast
    window); levels: annual means in the record's units.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(levels, dtype=float)
    if t.size < 3:
        raise ValueError(f"need at least 3 annual means to fit a quadratic, got {t.size}")
    if np.ptp(t) == 0:
        raise ValueError("degenerate design: all observation years are equal")
    design = np.column_stack([np.ones_like(t), t, t * t])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return QuadraticFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]), residuals=resid)


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = np.sum(x * x)
    if denom == 0.0:
        return 0.0
    return float(np.sum(x[1:] * x[:-1]) / denom)


def bootstrap_hindcasts(
    residuals,
    n: int = 55_000,
    horizon: int | None = None,
    seed: int = 0,
    method: str = "ar1",
    block_length: int | None = None,
    stream: str = "bootstrap",
) -> np.ndarray:
    """Simulate residual trajectories with the source autocorrelation structure.

    Returns an (n, horizon) array; adding the fitted trend curve turns rows
    into hindcasts (over the record window) or projections (beyond it).

    method "ar1" fits a first-order autoregression with Gaussian innovations;
    "block" draws a moving-block bootstrap of the raw residuals.
    """
    resid = np.asarray(residuals, dtype=float)
    if resid.size < 10:
        raise ValueError(f"need at least 10 residuals, got {resid.size}")
    if horizon is None:
        horizon = resid.size
    rng = substream(seed, stream)

    sd = float(resid.std())
    if sd == 0.0:
        return np.zeros((n, horizon))

    if method == "ar1":
        rho = float(np.clip(lag1_autocorrelation(resid), -0.98, 0.98))
        innov_sd = sd * np.sqrt(1.0 - rho * rho)
        out = np.empty((n, horizon))
        state = rng.normal(0.0, sd, size=n)
        for j in range(horizon):
            state = rho * state + rng.normal(0.0, innov_sd, size=n)
            out[:, j] = state
        return out
    if method == "block":
        L = block_length if block_length is not None else max(2, int(round(resid.size ** (1.0 / 3.0))))
        L = min(L, resid.size)
        nblocks = int(np.ceil(horizon / L))
        starts = rng.integers(0, resid.size - L + 1, size=(n, nblocks))
        idx = starts[:, :, None] + np.arange(L)[None, None, :]
        return resid[idx.reshape(n, -1)[:, :horizon]]
    raise ValueError(f"unknown bootstrap method {method!r}")


def rejection_calibrate(
    projections,
    assessment: PriorSpec,
    seed: int = 0,
    min_accepted: int = 100,
    stream: str = "calibration",
) -> np.ndarray:
    """Indices of ensemble members consistent with an expert assessment.

    Sampling-importance rejection: each member's projection (meters at the
    assessment year) is weighted by the assessment density over the empirical
    proposal density (histogram with Freedman-Diaconis bins) and accepted with
    probability weight / max(weight). Members outside the assessment support
    are always rejected. The surviving members' parameter tuples form the
    calibrated joint posterior.
    """
    x = np.asarray(projections, dtype=float)
    if x.size == 0:
        raise ValueError("projection ensemble is empty")
    if assessment.family != "beta-scaled":
        raise ValueError("assessment must be a beta-scaled prior")

    edges = np.histogram_bin_edges(x, bins="fd")
    counts, edges = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    density = counts / (x.size * widths)
    which = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, counts.size - 1)
    proposal = density[which]

    weights = np.zeros_like(x)
    ok = proposal > 0
    weights[ok] = prior_pdf(assessment, x[ok]) / proposal[ok]
    wmax = weights.max()
    if wmax == 0.0:
        raise NumericalError(
            "calibration failed: no projection falls inside the assessment support"
        )

    accept = substream(seed, stream).random(x.size) < weights / wmax
    accepted = np.flatnonzero(accept)
    if accepted.size < min_accepted:
        raise NumericalError(
            f"calibration failed: only {accepted.size} of {x.size} members accepted "
            f"(floor {min_accepted}); widen the proposal or relax the assessment"
        )
    return accepted
