"""Tide-gauge record ingestion and synthetic record generation.

Records are CSV files of (time, water level in mm) observations — either one
annual mean per year or high-frequency readings at sub-daily cadence. The
missing-value sentinel -99999 is dropped (and counted). Annual means feed the
sea-level trend fit; annual detrended maxima feed the extreme-value fits.

The synthetic generator stands in for restricted-access gauge records in
tests: quadratic trend + autocorrelated annual noise + one GEV-distributed
extreme per year, with the ground truth written to a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .sealevel import SlrParams, slr_project
from .surge import GevParams, gev_quantile

__all__ = ["TideGaugeSeries", "ingest_tide_gauge", "synth_tide_gauge", "MISSING_SENTINEL"]

MISSING_SENTINEL = -99999.0

HOURS_PER_YEAR = 365.25 * 24.0


@dataclass(frozen=True)
class TideGaugeSeries:
    """Water-level observations at strictly increasing decimal-year times.

    `dropped` counts missing-value sentinel rows excluded during ingestion.
    Annual aggregates are derived on demand, grouping by floor(time).
    """

    times: np.ndarray  # decimal years
    levels: np.ndarray  # mm
    dropped: int = 0
    source: str | None = None
    _groups: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)
        if times.shape != levels.shape or times.ndim != 1:
            raise ValueError("times and levels must be 1-d arrays of equal length")
        if times.size == 0:
            raise ValueError("series must hold at least one observation")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(levels)):
            raise ValueError("times and levels must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        times.flags.writeable = False
        levels.flags.writeable = False

    def __len__(self) -> int:
        return int(self.times.size)

    def observations_by_year(self):
        """(years, list of level arrays), grouped by calendar year."""
        if "by_year" not in self._groups:
            yrs = np.floor(self.times).astype(int)
            uniq, starts = np.unique(yrs, return_index=True)
            groups = np.split(self.levels, starts[1:])
            self._groups["by_year"] = (uniq, groups)
        return self._groups["by_year"]

    def annual_means(self):
        """(years, mean level per year) in mm."""
        years, groups = self.observations_by_year()
        return years, np.array([g.mean() for g in groups])

    def annual_maxima(self):
        """(years, max level per year) in mm — raw, not detrended."""
        years, groups = self.observations_by_year()
        return years, np.array([g.max() for g in groups])

    @property
    def final_year(self) -> int:
        return int(np.floor(self.times[-1]))


def ingest_tide_gauge(path, format: str = "auto") -> TideGaugeSeries:
    """Parse a CSV tide-gauge record into a TideGaugeSeries.

    Accepted layouts: `annual-mean` (integer year, mean level in mm) and
    `high-frequency` (decimal-year time, level in mm); `auto` accepts either.
    A non-numeric first line is treated as a header. Rows whose level equals
    the -99999 sentinel are dropped and counted. Malformed rows and
    non-monotone timestamps raise DataError with the offending line number.
    """
    if format not in ("auto", "annual-mean", "high-frequency"):
        raise ValueError(f"unknown format {format!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"tide-gauge file not found: {path}")
    times: list[float] = []
    levels: list[float] = []
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected 'time,level', got {line!r}")
            try:
                t = float(parts[0])
                lv = float(parts[1])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DataError(f"{path}:{lineno}: non-numeric row {line!r}") from None
            if lv == MISSING_SENTINEL:
                dropped += 1
                continue
            if times and t <= times[-1]:
                raise DataError(
                    f"{path}:{lineno}: timestamps must be strictly increasing "
                    f"({t} follows {times[-1]})"
                )
            if not (np.isfinite(t) and np.isfinite(lv)):
                raise DataError(f"{path}:{lineno}: non-finite value in row {line!r}")
            times.append(t)
            levels.append(lv)
    if not times:
        raise DataError(f"{path}: no usable observations")
    if format == "annual-mean":
        arr = np.asarray(times)
        if not np.all(arr == np.floor(arr)):
            raise DataError(f"{path}: annual-mean format requires integer year stamps")
    series = TideGaugeSeries(
        times=np.asarray(times), levels=np.asarray(levels), dropped=dropped, source=str(path)
    )
    return series


def synth_tide_gauge(
    path,
    slr_truth: SlrParams,
    gev_truth: GevParams | None,
    years: int = 137,
    cadence_hours: float = 3.0,
    seed: int = 0,
    start_year: int = 1879,
    noise_sd: float = 25.0,
    noise_rho: float = 0.5,
    obs_noise_sd: float = 5.0,
    stream: str = "synth",
) -> Path:
    """Write a synthetic tide-gauge record and its ground-truth sidecar.

    The record is `years` calendar years of observations at `cadence_hours`
    spacing. Each year's base level is the quadratic trend (`slr_truth`, in
    mm, with t = year - final record year) plus an AR(1) annual anomaly
    (stationary sd `noise_sd`, lag-1 correlation `noise_rho`), held constant
    within the year so annual means sit exactly on trend + anomaly. Each
    observation adds iid noise of sd `obs_noise_sd`, and one observation per
    year adds a draw from `gev_truth` (the storm surge), so the annual
    detrended maxima recover the GEV truth. Fixed seed => bit-identical file.

    Returns the record path; the truth sidecar lands at path + '.truth.json'.
    """
    from .rng import substream

    if years < 1:
        raise ValueError("years must be >= 1")
    if cadence_hours <= 0:
        raise ValueError("cadence_hours must be > 0")
    if noise_sd < 0 or obs_noise_sd < 0:
        raise ValueError("noise standard deviations must be >= 0")
    if not -1.0 < noise_rho < 1.0:
        raise ValueError(f"noise_rho must lie in (-1, 1), got {noise_rho}")

    rng = substream(seed, stream)
    n_obs = max(1, int(round(HOURS_PER_YEAR / cadence_hours)))
    final_year = start_year + years - 1
    tau = np.arange(start_year, final_year + 1) - final_year  # <= 0 over the record
    trend = slr_project(slr_truth, tau)

    # AR(1) annual anomaly with stationary variance noise_sd^2.
    anomaly = np.zeros(years)
    if noise_sd > 0:
        innov_sd = noise_sd * np.sqrt(1.0 - noise_rho**2)
        anomaly[0] = rng.normal(0.0, noise_sd)
        shocks = rng.normal(0.0, innov_sd, years - 1)
        for i in range(1, years):
            anomaly[i] = noise_rho * anomaly[i - 1] + shocks[i - 1]

    eps = rng.normal(0.0, obs_noise_sd, (years, n_obs)) if obs_noise_sd > 0 else np.zeros((years, n_obs))
    levels = trend[:, None] + anomaly[:, None] + eps
    if gev_truth is not None:
        surge_idx = rng.integers(0, n_obs, years)
        surge = gev_quantile(rng.random(years), gev_truth)
        levels[np.arange(years), surge_idx] += surge

    frac = (np.arange(n_obs) + 0.5) / n_obs
    times = (np.arange(start_year, final_year + 1)[:, None] + frac[None, :]).ravel()
    flat = levels.ravel()

    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_years,level_mm\n")
        # repr of Python floats (shortest round-trip form) keeps the file
        # bit-identical across reruns
        fh.writelines(f"{t!r},{lv!r}\n" for t, lv in zip(times.tolist(), flat.tolist()))

    truth = {
        "slr_mm": {
            "a": slr_truth.a,
            "b": slr_truth.b,
            "c": slr_truth.c,
            "c_star": slr_truth.c_star,
            "t_star": slr_truth.t_star,
            "reference_year": final_year,
        },
        "gev_mm": None
        if gev_truth is None
        else {"location": gev_truth.location, "scale": gev_truth.scale, "shape": gev_truth.shape},
        "noise": {"annual_sd": noise_sd, "annual_rho": noise_rho, "obs_sd": obs_noise_sd},
        "years": years,
        "cadence_hours": cadence_hours,
        "start_year": start_year,
        "seed": seed,
    }
    sidecar = path.with_name(path.name + ".truth.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
