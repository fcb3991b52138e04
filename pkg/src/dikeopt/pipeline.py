"""Pipeline stages that glue the model together, and their on-disk outputs.

Every stage is a pure function of the validated RunConfig (plus previously
computed artifacts), so reruns with the same config and seed produce
byte-identical files. Floats are written in their shortest round-trip form
(Python repr) and JSON keys are sorted.

Output files per run (all columns carry units in their headers):

- config_resolved.json        the config with every default materialized
- summary.json                headline numbers for the run
- cost_curve_deterministic.csv  point-value cost curve over the height grid
- sows.csv                    the sampled states of the world
- expected_tradeoffs.csv      per-height ensemble-mean objectives
- pareto_front.csv            nondominated expected objective vectors
- density_<x>__<y>.csv        2-D histogram counts for objective pairs
- satisficing.csv             per threshold set: surviving count + fraction
- satisficing_<name>_by_height.csv  per-height surviving SOW counts
- slr_fit.json / slr_residuals.csv  quadratic trend fit to annual means
- slr_posterior.csv           calibrated (a, b, c, c*, t*) member rows
- slr_hindcasts.csv           (member, year, level) curves for plotting
- gev_fit.json                MLE parameters, errors, datum, semi-log line
- block_maxima.csv            annual detrended maxima
- return_levels_mle.csv       delta-method confidence curve
- return_levels_posterior.csv HPD credible curve
- mcmc_chain.csv              thinned posterior samples
- gev_hpd.json                per-parameter posterior HPD intervals
- sensitivity_<objective>.csv / _pairs.csv / _network.csv / oat_sweep_<objective>.csv
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import RunConfig, config_to_dict
from .core import linear_slr, optimize_height
from .errors import ConfigError, DataError
from .objectives import (
    ECON_COLUMNS,
    GEV_COLUMNS,
    OBJECTIVE_NAMES,
    SLR_COLUMNS,
    ModelSetup,
    SolutionSet,
    density_histogram,
    evaluate_grid,
    expected_tradeoffs,
    pareto_filter,
    required_columns,
    satisfice,
)
from .rng import substream
from .sealevel import QuadraticFit, bootstrap_hindcasts, fit_polynomial, lag1_autocorrelation, rejection_calibrate
from .sensitivity import make_objective_model, merge_reports, oat_sweep, rank_parameters, sobol_indices
from .surge import (
    GevParams,
    McmcChain,
    ReturnLevelCurve,
    block_maxima,
    fit_gev_mle,
    gev_quantile,
    hpd_interval,
    mcmc_gev,
    return_level_mle,
    return_level_posterior,
    semilog_fit,
    semilog_return_level,
)
from .tidegauge import TideGaugeSeries, ingest_tide_gauge
from .uncertainty import PriorSpec, SowEnsemble, inverse_cdf, lhs_sample

__all__ = [
    "EnsembleInputs",
    "SlrCalibration",
    "SurgeAnalysis",
    "build_ensemble",
    "calibrate_slr",
    "fit_surge",
    "sensitivity_priors",
    "run_stages",
    "stages_for_version",
    "write_csv",
    "write_json",
]

_UNIT_EPS = 1e-12


# --- deterministic writers ---------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, columns) -> None:
    """Write columns as CSV with repr-formatted floats (byte-stable)."""
    cols = [c.tolist() if isinstance(c, np.ndarray) else list(c) for c in columns]
    if len(cols) != len(header):
        raise ValueError(f"{len(header)} header fields but {len(cols)} columns")
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns must share one length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON-serializable: {type(v).__name__}")


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
    Path(path).write_text(text + "\n", encoding="utf-8")


# --- SOW assembly -------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleInputs:
    """Calibrated joint samples feeding SOW assembly (None => sample priors).

    slr_rows columns: a (m), b (m/yr), c (m/yr^2), c* (m/yr), t* (years after
    the reference year). gev_rows columns: location, scale (mm), shape.
    """

    slr_rows: np.ndarray | None = None
    gev_rows: np.ndarray | None = None


def build_ensemble(
    cfg: RunConfig,
    inputs: EnsembleInputs = EnsembleInputs(),
    reference_year: int | None = None,
) -> SowEnsemble:
    """Assemble the SOW ensemble for the configured model version.

    One Latin-hypercube design covers everything: marginal priors are mapped
    through their inverse CDFs, while calibrated joint sets (sea-level
    posterior rows, MCMC chain rows) are indexed by a dedicated hypercube
    column so the joint dependence between their parameters survives.
    """
    version = cfg.model_version
    ref = cfg.slr.reference_year if reference_year is None else reference_year
    if version == "baseline":
        cols = {
            "value_of_goods": np.array([cfg.economic.value_of_goods]),
            "discount_rate": np.array([cfg.economic.discount_rate]),
            "cost_rate": np.array([cfg.economic.cost_rate]),
            "subsidence_rate": np.array([cfg.subsidence_rate]),
        }
        return SowEnsemble(columns=cols, seed=cfg.seed)

    needed = required_columns(version)
    use_slr = any(name in SLR_COLUMNS for name in needed)
    use_gev = any(name in GEV_COLUMNS for name in needed)
    d = len(ECON_COLUMNS)
    d += (1 if inputs.slr_rows is not None else len(SLR_COLUMNS)) if use_slr else 0
    d += (1 if inputs.gev_rows is not None else len(GEV_COLUMNS)) if use_gev else 0

    u = lhs_sample(cfg.n_sow, d, substream(cfg.seed, "ensemble"))
    u = np.clip(u, _UNIT_EPS, 1.0 - _UNIT_EPS)
    cols: dict[str, np.ndarray] = {}
    j = 0
    for name in ECON_COLUMNS:
        cols[name] = np.asarray(inverse_cdf(cfg.priors[name], u[:, j]))
        j += 1
    if use_slr:
        if inputs.slr_rows is not None:
            rows = np.asarray(inputs.slr_rows, dtype=float)
            idx = np.minimum((u[:, j] * rows.shape[0]).astype(int), rows.shape[0] - 1)
            j += 1
            for col, name in enumerate(SLR_COLUMNS):
                cols[name] = rows[idx, col]
        else:
            for name in SLR_COLUMNS:
                vals = np.asarray(inverse_cdf(cfg.priors[name], u[:, j]))
                if name == "slr_t_star":  # configured in calendar years
                    vals = np.maximum(0.0, vals - ref)
                cols[name] = vals
                j += 1
    if use_gev:
        if inputs.gev_rows is not None:
            rows = np.asarray(inputs.gev_rows, dtype=float)
            idx = np.minimum((u[:, j] * rows.shape[0]).astype(int), rows.shape[0] - 1)
            j += 1
            for col, name in enumerate(GEV_COLUMNS):
                cols[name] = rows[idx, col]
        else:
            for name in GEV_COLUMNS:
                cols[name] = np.asarray(inverse_cdf(cfg.priors[name], u[:, j]))
                j += 1
    return SowEnsemble(columns=cols, seed=cfg.seed)


# --- sea-level calibration ----------------------------------------------------

@dataclass(frozen=True)
class SlrCalibration:
    """Calibrated sea-level parameter sets from one tide-gauge record."""

    reference_year: int
    fit_mm: QuadraticFit
    rho1: float
    record_years: np.ndarray
    annual_means_mm: np.ndarray
    members: np.ndarray  # (n, 5): a, b, c in meters, c* (m/yr), t* (offset yr)
    rise_2100_m: np.ndarray  # projected rise since the reference year
    accepted: np.ndarray  # indices into members
    sample_curves: np.ndarray  # (<=100, window) hindcast levels, mm
    sample_members: np.ndarray  # member ids of sample_curves
    window_years: np.ndarray

    @property
    def accepted_rows(self) -> np.ndarray:
        return self.members[self.accepted]

    @property
    def accepted_rise(self) -> np.ndarray:
        return self.rise_2100_m[self.accepted]


def calibrate_slr(cfg: RunConfig, series: TideGaugeSeries) -> SlrCalibration:
    """Quadratic fit + residual bootstrap + expert-assessment rejection step.

    Members are hindcast refits: each bootstrap residual path is added to the
    fitted trend over the record window and refitted, giving one (a, b, c)
    per member; the abrupt-rise pair (c*, t*) is drawn from its priors. The
    member's projected rise at the projection year (refit trend + ramp +
    residual, relative to the refit level at t=0) is weighed against the
    beta expert assessment; surviving members form the joint posterior.
    """
    years, means = series.annual_means()
    ref = series.final_year
    tau = (years - ref).astype(float)
    fit = fit_polynomial(tau, means)
    rho1 = lag1_autocorrelation(fit.residuals)

    proj_off = cfg.slr.projection_year - ref
    if proj_off <= 0:
        raise DataError(
            f"record ends in {ref}, at or beyond the projection year {cfg.slr.projection_year}"
        )
    window = np.arange(int(tau[0]), proj_off + 1)
    n = cfg.slr.n_hindcasts
    paths = bootstrap_hindcasts(
        fit.residuals,
        n=n,
        horizon=window.size,
        seed=cfg.seed,
        method=cfg.slr.bootstrap_method,
        block_length=cfg.slr.block_length,
    )

    pos = (tau - tau[0]).astype(int)  # record years' positions in the window
    design = np.column_stack([np.ones_like(tau), tau, tau * tau])
    hindcast = fit.predict(tau)[None, :] + paths[:, pos]  # (n, n_rec) mm
    coef, *_ = np.linalg.lstsq(design, hindcast.T, rcond=None)  # (3, n)

    rng = substream(cfg.seed, "hindcast-priors")
    u = np.clip(rng.random((n, 2)), _UNIT_EPS, 1.0 - _UNIT_EPS)
    c_star = np.asarray(inverse_cdf(cfg.priors["slr_c_star"], u[:, 0]))
    t_cal = np.asarray(inverse_cdf(cfg.priors["slr_t_star"], u[:, 1]))
    t_off = np.maximum(0.0, t_cal - ref)

    pos_proj = int(proj_off - window[0])
    rise_m = (
        coef[1] * proj_off + coef[2] * proj_off**2 + paths[:, pos_proj]
    ) / 1000.0 + c_star * np.maximum(0.0, proj_off - t_off)

    if cfg.slr.calibrate:
        accepted = rejection_calibrate(
            rise_m, cfg.slr.assessment, seed=cfg.seed, min_accepted=cfg.slr.min_accepted
        )
    else:
        accepted = np.arange(n)

    members = np.column_stack([coef[0] / 1000.0, coef[1] / 1000.0, coef[2] / 1000.0, c_star, t_off])

    keep = accepted[: min(100, accepted.size)]
    trend = (
        members[keep, 0][:, None] * 1000.0
        + members[keep, 1][:, None] * 1000.0 * window
        + members[keep, 2][:, None] * 1000.0 * window**2
    )
    ramp = members[keep, 3][:, None] * 1000.0 * np.maximum(0.0, window - members[keep, 4][:, None])
    sample_curves = trend + ramp + paths[keep]

    return SlrCalibration(
        reference_year=ref,
        fit_mm=fit,
        rho1=float(rho1),
        record_years=years,
        annual_means_mm=means,
        members=members,
        rise_2100_m=rise_m,
        accepted=accepted,
        sample_curves=sample_curves,
        sample_members=keep,
        window_years=window + ref,
    )


# --- storm-surge fitting -------------------------------------------------------

@dataclass(frozen=True)
class SurgeAnalysis:
    """GEV fit (and optional posterior) of a record's annual detrended maxima."""

    maxima_years: np.ndarray
    maxima_mm: np.ndarray
    mle: GevParams
    datum_mm: float
    semilog: tuple[float, float]
    mle_curve: ReturnLevelCurve
    chain: McmcChain | None = None
    posterior_curve: ReturnLevelCurve | None = None


def fit_surge(cfg: RunConfig, series: TideGaugeSeries, run_mcmc: bool = True) -> SurgeAnalysis:
    """Annual-maxima GEV analysis: MLE, datum, baseline, optional posterior."""
    years, maxima = block_maxima(series, cfg.surge.min_block_obs)
    mle = fit_gev_mle(maxima, min_count=cfg.surge.min_maxima)
    p0 = cfg.frequency.initial_frequency
    datum = cfg.surge.datum_mm
    if datum is None:
        datum = gev_quantile(1.0 - p0, mle)
    Ts = np.asarray(cfg.surge.return_periods, dtype=float)
    analysis = SurgeAnalysis(
        maxima_years=years,
        maxima_mm=maxima,
        mle=mle,
        datum_mm=float(datum),
        semilog=semilog_fit(maxima),
        mle_curve=return_level_mle(mle, Ts),
    )
    if run_mcmc:
        chain = mcmc_gev(
            maxima,
            mle,
            iterations=cfg.surge.mcmc_iterations,
            seed=cfg.seed,
            prior_sd_multiplier=cfg.surge.prior_sd_multiplier,
            burn_in_fraction=cfg.surge.burn_in_fraction,
        )
        analysis = replace(
            analysis, chain=chain, posterior_curve=return_level_posterior(chain, Ts)
        )
    return analysis


# --- sensitivity priors ---------------------------------------------------------

def _span_prior(values: np.ndarray) -> PriorSpec:
    """Uniform over the 1st-99th percentile span of a calibrated sample."""
    lo, hi = np.quantile(np.asarray(values, dtype=float), [0.01, 0.99])
    if not hi > lo:
        pad = max(abs(lo) * 1e-6, 1e-9)
        lo, hi = lo - pad, hi + pad
    return PriorSpec("uniform", float(lo), float(hi))


def sensitivity_priors(
    cfg: RunConfig,
    reference_year: int,
    slr_rows: np.ndarray | None = None,
    gev_rows: np.ndarray | None = None,
) -> dict[str, PriorSpec]:
    """Marginals for the sensitivity sweeps of the configured model version.

    Calibrated joint sets are summarized by uniform spans over their
    1st-99th percentiles (the sweeps need independent marginals); otherwise
    the configured priors apply, with the abrupt-rise onset converted from
    calendar years to offsets from the reference year.
    """
    priors: dict[str, PriorSpec] = {}
    for name in required_columns(cfg.model_version):
        if name in SLR_COLUMNS and slr_rows is not None:
            priors[name] = _span_prior(slr_rows[:, SLR_COLUMNS.index(name)])
        elif name in GEV_COLUMNS and gev_rows is not None:
            priors[name] = _span_prior(gev_rows[:, GEV_COLUMNS.index(name)])
        elif name == "slr_t_star":
            p = cfg.priors[name]
            if p.family == "uniform":
                lo = max(0.0, p.param1 - reference_year)
                hi = max(p.param2 - reference_year, lo + 1e-9)
                priors[name] = PriorSpec("uniform", lo, hi)
            else:
                priors[name] = p
        else:
            priors[name] = cfg.priors[name]
    return priors


# --- stage runner ----------------------------------------------------------------

ALL_STAGES = (
    "optimize",
    "ensemble",
    "fit_slr",
    "calibrate_slr",
    "fit_gev",
    "mcmc",
    "tradeoffs",
    "satisfice",
    "sensitivity",
)


def stages_for_version(version: str) -> tuple[str, ...]:
    """The stages a full `run` executes for one model version."""
    if version == "baseline":
        return ("optimize",)
    stages = ["optimize", "ensemble", "tradeoffs", "satisfice", "sensitivity"]
    if version in ("slr_upgraded", "surge_upgraded"):
        stages[1:1] = ["fit_slr", "calibrate_slr"]
    if version == "surge_upgraded":
        stages[1:1] = ["fit_gev", "mcmc"]
    return tuple(stages)


def _ingest_records(cfg: RunConfig):
    slr_series = ingest_tide_gauge(cfg.slr.tide_gauge) if cfg.slr.tide_gauge else None
    surge_path = cfg.surge.tide_gauge or cfg.slr.tide_gauge
    if surge_path and surge_path == cfg.slr.tide_gauge:
        surge_series = slr_series
    elif surge_path:
        surge_series = ingest_tide_gauge(surge_path)
    else:
        surge_series = None
    return slr_series, surge_series


def run_stages(cfg: RunConfig, stages, out_dir=None) -> dict:
    """Execute the requested stages, write their files, return the summary.

    Dependencies are computed on demand (a `tradeoffs` request triggers
    ensemble assembly and any calibration its model version needs) but files
    are written only for the requested stages, plus config_resolved.json and
    summary.json always.
    """
    stages = tuple(stages)
    unknown = [s for s in stages if s not in ALL_STAGES]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; expected a subset of {ALL_STAGES}")
    out = Path(cfg.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config_resolved.json", config_to_dict(cfg))

    version = cfg.model_version
    heights = cfg.grid.heights()
    summary: dict = {"model_version": version, "seed": cfg.seed, "stages": list(stages)}

    slr_series, surge_series = _ingest_records(cfg)
    needs_ensemble = bool(
        set(stages) & {"ensemble", "tradeoffs", "satisfice", "sensitivity"}
    ) and version != "baseline"
    needs_cal = (
        "calibrate_slr" in stages or (needs_ensemble and version in ("slr_upgraded", "surge_upgraded"))
    ) and slr_series is not None
    needs_fit_slr = "fit_slr" in stages and slr_series is not None
    needs_surge = (
        "fit_gev" in stages
        or "mcmc" in stages
        or (needs_ensemble and version == "surge_upgraded")
    ) and surge_series is not None
    if ("fit_slr" in stages or "calibrate_slr" in stages) and slr_series is None:
        raise ConfigError("slr stages need slr.tide_gauge to point at a record")
    if ("fit_gev" in stages or "mcmc" in stages) and surge_series is None:
        raise ConfigError("surge stages need surge.tide_gauge (or slr.tide_gauge) to point at a record")

    # ---- sea-level stages
    cal: SlrCalibration | None = None
    if needs_cal:
        cal = calibrate_slr(cfg, slr_series)
    elif needs_fit_slr:
        pass  # plain fit below
    if needs_fit_slr or cal is not None:
        if cal is not None:
            fit, years, means, ref = cal.fit_mm, cal.record_years, cal.annual_means_mm, cal.reference_year
            rho1 = cal.rho1
        else:
            years, means = slr_series.annual_means()
            ref = slr_series.final_year
            fit = fit_polynomial((years - ref).astype(float), means)
            rho1 = lag1_autocorrelation(fit.residuals)
        if "fit_slr" in stages:
            write_json(
                out / "slr_fit.json",
                {
                    "reference_year": ref,
                    "a_mm": fit.a,
                    "b_mm_per_yr": fit.b,
                    "c_mm_per_yr2": fit.c,
                    "residual_sd_mm": float(fit.residuals.std()),
                    "residual_lag1_autocorrelation": rho1,
                    "n_years": int(years.size),
                },
            )
            write_csv(
                out / "slr_residuals.csv",
                ["year", "annual_mean_mm", "fitted_mm", "residual_mm"],
                [years, means, means - fit.residuals, fit.residuals],
            )
        summary["slr_fit"] = {"a_mm": fit.a, "b_mm_per_yr": fit.b, "c_mm_per_yr2": fit.c, "rho1": rho1}

    if cal is not None:
        rows = cal.accepted_rows
        if "calibrate_slr" in stages:
            write_csv(
                out / "slr_posterior.csv",
                ["member", "a_m", "b_m_per_yr", "c_m_per_yr2", "c_star_m_per_yr", "t_star_offset_yr", "rise_2100_m"],
                [cal.accepted, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4], cal.accepted_rise],
            )
            m_ids = np.repeat(cal.sample_members, cal.window_years.size)
            yrs = np.tile(cal.window_years, cal.sample_members.size)
            write_csv(
                out / "slr_hindcasts.csv",
                ["member", "year", "level_mm"],
                [m_ids, yrs, cal.sample_curves.ravel()],
            )
        linear_2100 = cfg.slr.linear_rate * (cfg.slr.projection_year - cal.reference_year)
        rise = cal.accepted_rise
        summary["slr_calibration"] = {
            "n_hindcasts": int(cal.members.shape[0]),
            "n_accepted": int(cal.accepted.size),
            "rise_2100_mean_m": float(rise.mean()),
            "rise_2100_sd_m": float(rise.std()),
            "linear_rate_rise_2100_m": float(linear_2100),
            "linear_rate_percentile": float((rise < linear_2100).mean()),
        }

    # ---- surge stages
    surge: SurgeAnalysis | None = None
    datum_mm = cfg.surge.datum_mm
    if needs_surge:
        surge = fit_surge(cfg, surge_series, run_mcmc="mcmc" in stages or needs_ensemble)
        datum_mm = surge.datum_mm
        if "fit_gev" in stages or "mcmc" in stages:
            write_csv(
                out / "block_maxima.csv",
                ["year", "detrended_maximum_mm"],
                [surge.maxima_years, surge.maxima_mm],
            )
            se = surge.mle.se
            write_json(
                out / "gev_fit.json",
                {
                    "location_mm": surge.mle.location,
                    "scale_mm": surge.mle.scale,
                    "shape": surge.mle.shape,
                    "se_location_mm": se[0],
                    "se_scale_mm": se[1],
                    "se_shape": se[2],
                    "datum_mm": surge.datum_mm,
                    "n_maxima": int(surge.maxima_mm.size),
                    "semilog_intercept": surge.semilog[0],
                    "semilog_slope_per_mm": surge.semilog[1],
                },
            )
            c = surge.mle_curve
            write_csv(
                out / "return_levels_mle.csv",
                ["return_period_yr", "level_mm", "lo90_mm", "hi90_mm", "lo95_mm", "hi95_mm"],
                [c.return_periods, c.expected, c.lo90, c.hi90, c.lo95, c.hi95],
            )
        summary["surge_fit"] = {
            "location_mm": surge.mle.location,
            "scale_mm": surge.mle.scale,
            "shape": surge.mle.shape,
            "datum_mm": surge.datum_mm,
            "return_level_10000_mle_mm": float(gev_quantile(1.0 - 1.0 / 10_000.0, surge.mle)),
            "return_level_10000_semilog_mm": float(semilog_return_level(surge.semilog, 10_000.0)),
        }
        if surge.chain is not None:
            if "mcmc" in stages:
                thin = max(1, surge.chain.samples.shape[0] // 10_000)
                kept = surge.chain.samples[::thin]
                write_csv(
                    out / "mcmc_chain.csv",
                    ["location_mm", "scale_mm", "shape"],
                    [kept[:, 0], kept[:, 1], kept[:, 2]],
                )
                hpd = {}
                for i, name in enumerate(("location_mm", "scale_mm", "shape")):
                    s = surge.chain.samples[:, i]
                    hpd[name] = {
                        "mean": float(s.mean()),
                        "hpd90": list(hpd_interval(s, 0.90)),
                        "hpd95": list(hpd_interval(s, 0.95)),
                    }
                hpd["acceptance_rate"] = surge.chain.acceptance_rate
                write_json(out / "gev_hpd.json", hpd)
                c = surge.posterior_curve
                write_csv(
                    out / "return_levels_posterior.csv",
                    ["return_period_yr", "level_mm", "lo90_mm", "hi90_mm", "lo95_mm", "hi95_mm"],
                    [c.return_periods, c.expected, c.lo90, c.hi90, c.lo95, c.hi95],
                )
            i10k = int(np.argmin(np.abs(np.asarray(cfg.surge.return_periods) - 10_000)))
            summary["surge_posterior"] = {
                "acceptance_rate": surge.chain.acceptance_rate,
                "return_level_10000_posterior_mean_mm": float(surge.posterior_curve.expected[i10k]),
            }

    # ---- deterministic optimization
    if "optimize" in stages or needs_ensemble or "sensitivity" in stages:
        best, curve = optimize_height(
            cfg.economic,
            cfg.frequency,
            cfg.horizon,
            cfg.subsidence_rate,
            linear_slr(cfg.slr.linear_rate),
            heights,
        )
        if "optimize" in stages:
            write_csv(
                out / "cost_curve_deterministic.csv",
                ["height_m", "investment_gl", "flood_probability_per_yr", "damages_gl", "total_cost_gl"],
                [curve.height, curve.investment, curve.flood_probability, curve.damages, curve.total_cost],
            )
        at = int(np.argmin(curve.total_cost))
        summary["deterministic"] = {
            "optimal_height_m": best,
            "total_cost_gl": float(curve.total_cost[at]),
            "investment_gl": float(curve.investment[at]),
            "damages_gl": float(curve.damages[at]),
            "flood_probability_per_yr": float(curve.flood_probability[at]),
        }

    # ---- ensemble + objective grid
    solutions: SolutionSet | None = None
    ref_year = (
        cal.reference_year
        if cal is not None
        else (surge_series.final_year if surge_series is not None else cfg.slr.reference_year)
    )
    if needs_ensemble:
        inputs = EnsembleInputs(
            slr_rows=cal.accepted_rows if cal is not None else None,
            gev_rows=surge.chain.samples if surge is not None and surge.chain is not None else None,
        )
        ensemble = build_ensemble(cfg, inputs, reference_year=ref_year)
        if "ensemble" in stages:
            names = list(ensemble.names)
            write_csv(
                out / "sows.csv",
                ["sow_index"] + names,
                [np.arange(len(ensemble))] + [ensemble.columns[n] for n in names],
            )
        summary["n_sow"] = len(ensemble)

        setup = ModelSetup(
            version=version,
            frequency=cfg.frequency,
            horizon=cfg.horizon,
            slr_rate=cfg.slr.linear_rate,
            abrupt_mode=cfg.slr.abrupt_mode,
            datum_mm=datum_mm,
        )
        solutions = evaluate_grid(ensemble, heights, setup, threads=cfg.threads)

    if solutions is not None and ("tradeoffs" in stages or "satisfice" in stages or "sensitivity" in stages):
        curve = expected_tradeoffs(solutions)
        summary["expected"] = {
            "optimal_height_m": curve.best_height,
            "total_cost_gl": float(curve.total_cost[curve.best_index]),
            "investment_gl": float(curve.investment[curve.best_index]),
            "damages_gl": float(curve.damages[curve.best_index]),
            "flood_probability_per_yr": float(curve.flood_probability[curve.best_index]),
        }
        if "tradeoffs" in stages:
            write_csv(
                out / "expected_tradeoffs.csv",
                ["height_m", "investment_gl", "flood_probability_per_yr", "damages_gl", "total_cost_gl"],
                [curve.heights, curve.investment, curve.flood_probability, curve.damages, curve.total_cost],
            )
            pts = np.column_stack([curve.total_cost, curve.investment, curve.flood_probability, curve.damages])
            front, idx = pareto_filter(pts)
            write_csv(
                out / "pareto_front.csv",
                ["height_m", "total_cost_gl", "investment_gl", "flood_probability_per_yr", "damages_gl"],
                [curve.heights[idx], front[:, 0], front[:, 1], front[:, 2], front[:, 3]],
            )
            summary["ideal_point"] = {
                "total_cost_gl": float(front[:, 0].min()),
                "investment_gl": float(front[:, 1].min()),
                "flood_probability_per_yr": float(front[:, 2].min()),
                "damages_gl": float(front[:, 3].min()),
            }
            for x_name, y_name in combinations(OBJECTIVE_NAMES, 2):
                xe, ye, counts = density_histogram(solutions, x_name, y_name)
                nx, ny = counts.shape
                xi, yi = np.divmod(np.arange(nx * ny), ny)
                write_csv(
                    out / f"density_{x_name}__{y_name}.csv",
                    [f"{x_name}_lo", f"{x_name}_hi", f"{y_name}_lo", f"{y_name}_hi", "count"],
                    [xe[xi], xe[xi + 1], ye[yi], ye[yi + 1], counts.ravel().astype(int)],
                )

    if solutions is not None and "satisfice" in stages:
        sat_summary = {}
        names, counts, fracs = [], [], []
        for ts in cfg.satisficing:
            result = satisfice(solutions, ts.thresholds)
            sat_summary[ts.name] = {"count": result.count, "fraction": result.fraction}
            names.append(ts.name)
            counts.append(result.count)
            fracs.append(result.fraction)
            write_csv(
                out / f"satisficing_{ts.name}_by_height.csv",
                ["height_m", "surviving_sows", "fraction_of_sows"],
                [
                    solutions.heights,
                    result.mask.sum(axis=0),
                    result.mask.mean(axis=0),
                ],
            )
        write_csv(out / "satisficing.csv", ["set_name", "count", "fraction"], [names, counts, fracs])
        summary["satisficing"] = sat_summary

    if "sensitivity" in stages and version != "baseline":
        sens_height = cfg.sensitivity.height
        if sens_height is None:
            sens_height = summary.get("expected", {}).get("optimal_height_m")
        if sens_height is None:
            raise ConfigError("sensitivity.height is unset and no expected optimum is available")
        priors = sensitivity_priors(
            cfg,
            ref_year,
            slr_rows=cal.accepted_rows if cal is not None else None,
            gev_rows=surge.chain.samples if surge is not None and surge.chain is not None else None,
        )
        setup = ModelSetup(
            version=version,
            frequency=cfg.frequency,
            horizon=cfg.horizon,
            slr_rate=cfg.slr.linear_rate,
            abrupt_mode=cfg.slr.abrupt_mode,
            datum_mm=datum_mm,
        )
        sens_summary = {}
        for objective in cfg.sensitivity.objectives:
            model = make_objective_model(setup, objective, float(sens_height))
            oat = oat_sweep(
                model, priors, cfg.sensitivity.points_per_param, objective=objective, height=float(sens_height)
            )
            sob = sobol_indices(
                model,
                priors,
                n_base=cfg.sensitivity.n_base,
                seed=cfg.seed,
                second_order=cfg.sensitivity.second_order,
                objective=objective,
                height=float(sens_height),
            )
            report = merge_reports(oat, sob)
            d = len(report.names)
            write_csv(
                out / f"sensitivity_{objective}.csv",
                ["parameter", "oat_range", "oat_share", "oat_insensitive", "s1", "s1_raw", "st", "st_raw"],
                [
                    list(report.names),
                    report.oat_ranges,
                    report.oat_shares,
                    report.oat_insensitive,
                    report.first_order,
                    report.raw_first,
                    report.total_order,
                    report.raw_total,
                ],
            )
            pts = cfg.sensitivity.points_per_param
            write_csv(
                out / f"oat_sweep_{objective}.csv",
                ["parameter", "point", "value", "output"],
                [
                    [name for name in report.names for _ in range(pts)],
                    list(np.tile(np.arange(pts), d)),
                    report.oat_values.ravel(),
                    report.oat_outputs.ravel(),
                ],
            )
            if report.second_order is not None:
                pi, pj, s2, s2_raw = [], [], [], []
                for i in range(d):
                    for k in range(i + 1, d):
                        pi.append(report.names[i])
                        pj.append(report.names[k])
                        s2.append(float(report.second_order[i, k]))
                        s2_raw.append(float(report.raw_second[i, k]))
                write_csv(
                    out / f"sensitivity_{objective}_pairs.csv",
                    ["parameter_i", "parameter_j", "s2", "s2_raw"],
                    [pi, pj, s2, s2_raw],
                )
            with open(out / f"sensitivity_{objective}_network.csv", "w", encoding="utf-8", newline="\n") as fh:
                fh.write("kind,p1,p2,first_or_second,total\n")
                for i, name in enumerate(report.names):
                    fh.write(
                        f"node,{name},,{report.first_order[i]!r},{report.total_order[i]!r}\n"
                    )
                if report.second_order is not None:
                    for i in range(d):
                        for k in range(i + 1, d):
                            fh.write(
                                f"edge,{report.names[i]},{report.names[k]},{report.second_order[i, k]!r},\n"
                            )
            sens_summary[objective] = {
                "height_m": float(sens_height),
                "n_base": cfg.sensitivity.n_base,
                "ranking_total": rank_parameters(report, "total"),
                "first_order": {n: float(v) for n, v in zip(report.names, report.first_order)},
                "total_order": {n: float(v) for n, v in zip(report.names, report.total_order)},
                "oat_share": {n: float(v) for n, v in zip(report.names, report.oat_shares)},
            }
        summary["sensitivity"] = sens_summary

    write_json(out / "summary.json", summary)
    return summary
