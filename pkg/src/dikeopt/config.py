"""Run configuration: JSON schema, defaults, validation, round-trip.

A run is described by a single JSON document. Every field has a default, so
`{"seed": 0}` is a complete baseline configuration; user documents are deep-
merged over the defaults and validated fully before any computation starts.
Unknown keys are rejected (they are usually typos), and the seed is
mandatory — all randomness flows from it through named substreams.

Prior table (the sampling defaults for the uncertain parameters):

    value_of_goods    normal(2e10, 1e9), truncated > 0     guilders
    discount_rate     lognormal(median 0.02, log-sd 0.1)   per year
    cost_rate         normal(4.2e7, 4e6), truncated > 0    guilders/m
    subsidence_rate   lognormal(median 0.002, log-sd 0.1)  m/yr
    slr_a             uniform(-0.017, 0.076)               m
    slr_b             uniform(-0.0007, 0.0039)             m/yr
    slr_c             uniform(-7.5e-6, 1.3e-5)             m/yr^2
    slr_c_star        uniform(0, 0.035)                    m/yr
    slr_t_star        uniform(2015, 2090)                  calendar year
    gev_location      uniform(278, 291)                    mm
    gev_scale         uniform(39.9, 50.5)                  mm
    gev_shape         uniform(-0.14, 0.094)                -

slr_t_star is configured in calendar years and converted to an offset from
the reference year when states of the world are assembled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .core import EconomicParams, FloodFrequencyParams, default_height_grid
from .errors import ConfigError
from .objectives import MODEL_VERSIONS, OBJECTIVE_NAMES
from .uncertainty import PriorSpec

__all__ = [
    "GridSpec",
    "SlrSettings",
    "SurgeSettings",
    "SensitivitySettings",
    "ThresholdSet",
    "RunConfig",
    "DEFAULT_PRIORS",
    "default_config",
    "load_config",
    "config_to_dict",
    "dumps_config",
    "save_config",
]

DEFAULT_PRIORS: dict[str, PriorSpec] = {
    "value_of_goods": PriorSpec("normal", 2.0e10, 1.0e9, bounds=(0.0, math.inf)),
    "discount_rate": PriorSpec("lognormal", 0.02, 0.1),
    "cost_rate": PriorSpec("normal", 4.2e7, 4.0e6, bounds=(0.0, math.inf)),
    "subsidence_rate": PriorSpec("lognormal", 0.002, 0.1),
    "slr_a": PriorSpec("uniform", -0.017, 0.076),
    "slr_b": PriorSpec("uniform", -0.0007, 0.0039),
    "slr_c": PriorSpec("uniform", -7.5e-6, 1.3e-5),
    "slr_c_star": PriorSpec("uniform", 0.0, 0.035),
    "slr_t_star": PriorSpec("uniform", 2015.0, 2090.0),
    "gev_location": PriorSpec("uniform", 278.0, 291.0),
    "gev_scale": PriorSpec("uniform", 39.9, 50.5),
    "gev_shape": PriorSpec("uniform", -0.14, 0.094),
}

DEFAULT_RETURN_PERIODS = (2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)


@dataclass(frozen=True)
class GridSpec:
    """Candidate heightening grid in meters."""

    low: float = 0.0
    high: float = 10.0
    step: float = 0.05

    def __post_init__(self):
        if self.low < 0 or self.high <= self.low or self.step <= 0:
            raise ConfigError(f"invalid height grid (low={self.low}, high={self.high}, step={self.step})")

    def heights(self):
        return default_height_grid(self.low, self.high, self.step)


@dataclass(frozen=True)
class SlrSettings:
    """Sea-level model settings: trend fit, bootstrap, calibration."""

    linear_rate: float = 0.008  # m/yr for the simple model versions
    abrupt_mode: str = "ramp"
    reference_year: int = 2015  # t=0; overridden by a record's final year
    projection_year: int = 2100  # calibration target
    tide_gauge: str | None = None  # path; None => sample the priors directly
    n_hindcasts: int = 55_000
    bootstrap_method: str = "ar1"  # or "block"
    block_length: int | None = None
    min_accepted: int = 100
    calibrate: bool = True
    assessment: PriorSpec = PriorSpec("beta-scaled", 2.4, 2.6, bounds=(0.0, 2.5))

    def __post_init__(self):
        if self.abrupt_mode not in ("ramp", "step"):
            raise ConfigError(f"slr.abrupt_mode must be 'ramp' or 'step', got {self.abrupt_mode!r}")
        if self.bootstrap_method not in ("ar1", "block"):
            raise ConfigError(f"slr.bootstrap_method must be 'ar1' or 'block', got {self.bootstrap_method!r}")
        if self.projection_year <= self.reference_year:
            raise ConfigError("slr.projection_year must be after slr.reference_year")
        if self.n_hindcasts < 1 or self.min_accepted < 1:
            raise ConfigError("slr.n_hindcasts and slr.min_accepted must be >= 1")
        if self.assessment.family != "beta-scaled":
            raise ConfigError("slr.assessment must be a beta-scaled prior")


@dataclass(frozen=True)
class SurgeSettings:
    """Storm-surge extreme-value settings."""

    tide_gauge: str | None = None  # defaults to slr.tide_gauge
    min_block_obs: int = 1
    min_maxima: int = 20
    mcmc_iterations: int = 100_000
    burn_in_fraction: float = 0.1
    prior_sd_multiplier: float = 10.0
    datum_mm: float | None = None  # default: fitted (1 - p0) quantile
    return_periods: tuple = DEFAULT_RETURN_PERIODS

    def __post_init__(self):
        if self.mcmc_iterations < 10:
            raise ConfigError("surge.mcmc_iterations must be >= 10")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("surge.burn_in_fraction must lie in [0, 1)")
        if self.prior_sd_multiplier <= 0:
            raise ConfigError("surge.prior_sd_multiplier must be > 0")
        if any(T <= 1 for T in self.return_periods):
            raise ConfigError("surge.return_periods must all exceed 1 year")


@dataclass(frozen=True)
class SensitivitySettings:
    n_base: int = 1024
    points_per_param: int = 21
    second_order: bool = True
    objectives: tuple = OBJECTIVE_NAMES
    height: float | None = None  # None => the version's expected-optimal heightening

    def __post_init__(self):
        if self.n_base < 64 or (self.n_base & (self.n_base - 1)) != 0:
            raise ConfigError(f"sensitivity.n_base must be a power of two >= 64, got {self.n_base}")
        if self.points_per_param < 3:
            raise ConfigError("sensitivity.points_per_param must be >= 3")
        bad = [o for o in self.objectives if o not in OBJECTIVE_NAMES]
        if bad:
            raise ConfigError(f"unknown sensitivity objectives {bad}; expected {OBJECTIVE_NAMES}")


@dataclass(frozen=True)
class ThresholdSet:
    """One named satisficing rule: strict upper bounds per objective."""

    name: str
    thresholds: Mapping[str, float]

    def __post_init__(self):
        bad = [k for k in self.thresholds if k not in OBJECTIVE_NAMES]
        if bad:
            raise ConfigError(f"threshold set {self.name!r} names unknown objectives {bad}")
        if not self.thresholds:
            raise ConfigError(f"threshold set {self.name!r} is empty")


DEFAULT_THRESHOLD_SETS = (
    ThresholdSet("two_threshold", {"flood_probability": 1e-4, "investment": 1e8}),
    ThresholdSet(
        "three_threshold",
        {"flood_probability": 1e-4, "investment": 1e8, "damages": 1e6},
    ),
)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description; every field carries its default."""

    model_version: str = "baseline"
    seed: int = 0
    threads: int = 1
    output_dir: str = "out"
    horizon: int = 75
    subsidence_rate: float = 0.002  # m/yr point value (deterministic curves)
    n_sow: int = 10_000
    economic: EconomicParams = EconomicParams()
    frequency: FloodFrequencyParams = FloodFrequencyParams()
    grid: GridSpec = GridSpec()
    priors: Mapping[str, PriorSpec] = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    slr: SlrSettings = SlrSettings()
    surge: SurgeSettings = SurgeSettings()
    satisficing: tuple = DEFAULT_THRESHOLD_SETS
    sensitivity: SensitivitySettings = SensitivitySettings()

    def __post_init__(self):
        if self.model_version not in MODEL_VERSIONS:
            raise ConfigError(
                f"unknown model_version {self.model_version!r}; expected one of {MODEL_VERSIONS}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_sow < 1:
            raise ConfigError(f"n_sow must be >= 1, got {self.n_sow}")
        from .objectives import required_columns

        missing = [p for p in required_columns(self.model_version) if p not in self.priors]
        if missing:
            raise ConfigError(
                f"model_version {self.model_version!r} needs priors for {missing}"
            )


def default_config(model_version: str = "baseline", seed: int = 0, **overrides) -> RunConfig:
    """A complete RunConfig from the defaults table."""
    return RunConfig(model_version=model_version, seed=seed, **overrides)


# --- JSON (de)serialization -------------------------------------------------

def _prior_to_json(p: PriorSpec) -> dict:
    bounds = None
    if p.bounds is not None:
        lo = None if math.isinf(p.bounds[0]) else p.bounds[0]
        hi = None if math.isinf(p.bounds[1]) else p.bounds[1]
        bounds = [lo, hi]
    return {"family": p.family, "param1": p.param1, "param2": p.param2, "bounds": bounds}


def _prior_from_json(obj, where: str) -> PriorSpec:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{where}: prior must be an object, got {type(obj).__name__}")
    unknown = set(obj) - {"family", "param1", "param2", "bounds"}
    if unknown:
        raise ConfigError(f"{where}: unknown prior keys {sorted(unknown)}")
    try:
        bounds = obj.get("bounds")
        if bounds is not None:
            lo, hi = bounds
            bounds = (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
        return PriorSpec(
            family=obj["family"],
            param1=float(obj["param1"]),
            param2=float(obj["param2"]),
            bounds=bounds,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid prior ({exc})") from exc


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready dictionary with all defaults materialized."""
    return {
        "model_version": cfg.model_version,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "output_dir": cfg.output_dir,
        "horizon": cfg.horizon,
        "subsidence_rate": cfg.subsidence_rate,
        "economic": {
            "value_of_goods": cfg.economic.value_of_goods,
            "discount_rate": cfg.economic.discount_rate,
            "cost_rate": cfg.economic.cost_rate,
        },
        "flood_frequency": {
            "initial_frequency": cfg.frequency.initial_frequency,
            "decay_rate": cfg.frequency.decay_rate,
        },
        "grid": {"low": cfg.grid.low, "high": cfg.grid.high, "step": cfg.grid.step},
        "sampling": {"n_sow": cfg.n_sow},
        "priors": {name: _prior_to_json(p) for name, p in cfg.priors.items()},
        "slr": {
            "linear_rate": cfg.slr.linear_rate,
            "abrupt_mode": cfg.slr.abrupt_mode,
            "reference_year": cfg.slr.reference_year,
            "projection_year": cfg.slr.projection_year,
            "tide_gauge": cfg.slr.tide_gauge,
            "n_hindcasts": cfg.slr.n_hindcasts,
            "bootstrap_method": cfg.slr.bootstrap_method,
            "block_length": cfg.slr.block_length,
            "min_accepted": cfg.slr.min_accepted,
            "calibrate": cfg.slr.calibrate,
            "assessment": _prior_to_json(cfg.slr.assessment),
        },
        "surge": {
            "tide_gauge": cfg.surge.tide_gauge,
            "min_block_obs": cfg.surge.min_block_obs,
            "min_maxima": cfg.surge.min_maxima,
            "mcmc_iterations": cfg.surge.mcmc_iterations,
            "burn_in_fraction": cfg.surge.burn_in_fraction,
            "prior_sd_multiplier": cfg.surge.prior_sd_multiplier,
            "datum_mm": cfg.surge.datum_mm,
            "return_periods": list(cfg.surge.return_periods),
        },
        "satisficing": [
            {"name": ts.name, "thresholds": dict(ts.thresholds)} for ts in cfg.satisficing
        ],
        "sensitivity": {
            "n_base": cfg.sensitivity.n_base,
            "points_per_param": cfg.sensitivity.points_per_param,
            "second_order": cfg.sensitivity.second_order,
            "objectives": list(cfg.sensitivity.objectives),
            "height": cfg.sensitivity.height,
        },
    }


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")


def _merge(base: dict, user: Mapping, path: str) -> dict:
    out = dict(base)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and path != "priors" and key != "priors":
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _require_number(obj: Mapping, key: str, where: str, integer: bool = False):
    if key not in obj:
        raise ConfigError(f"missing config key {where}.{key}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return int(v) if integer else float(v)


def load_config(source) -> RunConfig:
    """Parse and validate a JSON config from a path, JSON text, or mapping.

    The seed is mandatory in user documents; everything else defaults.
    """
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = None
        candidate = str(source)
        if isinstance(source, (str, Path)) and not candidate.lstrip().startswith("{"):
            p = Path(source)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            text = p.read_text(encoding="utf-8")
        else:
            text = candidate
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")

    if "seed" not in doc:
        raise ConfigError("config must set 'seed' (all randomness derives from it)")

    base = config_to_dict(RunConfig())
    merged = _merge(base, doc, "")

    priors_doc = merged["priors"]
    if not isinstance(priors_doc, Mapping):
        raise ConfigError("'priors' must be an object of name -> prior")
    priors: dict[str, PriorSpec] = {}
    defaults_json = {name: _prior_to_json(p) for name, p in DEFAULT_PRIORS.items()}
    for name, spec in {**defaults_json, **dict(priors_doc)}.items():
        if name not in DEFAULT_PRIORS:
            raise ConfigError(f"priors.{name}: unknown uncertain parameter")
        priors[name] = _prior_from_json(spec, f"priors.{name}")

    sat_doc = merged["satisficing"]
    if not isinstance(sat_doc, (list, tuple)):
        raise ConfigError("'satisficing' must be a list of {name, thresholds} objects")
    threshold_sets = []
    for i, item in enumerate(sat_doc):
        if not isinstance(item, Mapping) or set(item) - {"name", "thresholds"}:
            raise ConfigError(f"satisficing[{i}] must be an object with keys name, thresholds")
        thr = item.get("thresholds")
        if not isinstance(thr, Mapping):
            raise ConfigError(f"satisficing[{i}].thresholds must be an object")
        threshold_sets.append(
            ThresholdSet(str(item.get("name", f"set_{i}")), {k: float(v) for k, v in thr.items()})
        )

    econ = merged["economic"]
    freq = merged["flood_frequency"]
    grid = merged["grid"]
    slr = merged["slr"]
    surge = merged["surge"]
    sens = merged["sensitivity"]
    try:
        return RunConfig(
            model_version=str(merged["model_version"]),
            seed=_require_number(merged, "seed", "", integer=True),
            threads=_require_number(merged, "threads", "", integer=True),
            output_dir=str(merged["output_dir"]),
            horizon=_require_number(merged, "horizon", "", integer=True),
            subsidence_rate=_require_number(merged, "subsidence_rate", ""),
            n_sow=_require_number(merged["sampling"], "n_sow", "sampling", integer=True),
            economic=EconomicParams(
                value_of_goods=_require_number(econ, "value_of_goods", "economic"),
                discount_rate=_require_number(econ, "discount_rate", "economic"),
                cost_rate=_require_number(econ, "cost_rate", "economic"),
            ),
            frequency=FloodFrequencyParams(
                initial_frequency=_require_number(freq, "initial_frequency", "flood_frequency"),
                decay_rate=_require_number(freq, "decay_rate", "flood_frequency"),
            ),
            grid=GridSpec(
                low=_require_number(grid, "low", "grid"),
                high=_require_number(grid, "high", "grid"),
                step=_require_number(grid, "step", "grid"),
            ),
            priors=priors,
            slr=SlrSettings(
                linear_rate=_require_number(slr, "linear_rate", "slr"),
                abrupt_mode=str(slr["abrupt_mode"]),
                reference_year=_require_number(slr, "reference_year", "slr", integer=True),
                projection_year=_require_number(slr, "projection_year", "slr", integer=True),
                tide_gauge=None if slr["tide_gauge"] is None else str(slr["tide_gauge"]),
                n_hindcasts=_require_number(slr, "n_hindcasts", "slr", integer=True),
                bootstrap_method=str(slr["bootstrap_method"]),
                block_length=None
                if slr["block_length"] is None
                else _require_number(slr, "block_length", "slr", integer=True),
                min_accepted=_require_number(slr, "min_accepted", "slr", integer=True),
                calibrate=bool(slr["calibrate"]),
                assessment=_prior_from_json(slr["assessment"], "slr.assessment"),
            ),
            surge=SurgeSettings(
                tide_gauge=None if surge["tide_gauge"] is None else str(surge["tide_gauge"]),
                min_block_obs=_require_number(surge, "min_block_obs", "surge", integer=True),
                min_maxima=_require_number(surge, "min_maxima", "surge", integer=True),
                mcmc_iterations=_require_number(surge, "mcmc_iterations", "surge", integer=True),
                burn_in_fraction=_require_number(surge, "burn_in_fraction", "surge"),
                prior_sd_multiplier=_require_number(surge, "prior_sd_multiplier", "surge"),
                datum_mm=None
                if surge["datum_mm"] is None
                else _require_number(surge, "datum_mm", "surge"),
                return_periods=tuple(float(T) for T in surge["return_periods"]),
            ),
            satisficing=tuple(threshold_sets),
            sensitivity=SensitivitySettings(
                n_base=_require_number(sens, "n_base", "sensitivity", integer=True),
                points_per_param=_require_number(sens, "points_per_param", "sensitivity", integer=True),
                second_order=bool(sens["second_order"]),
                objectives=tuple(str(o) for o in sens["objectives"]),
                height=None if sens["height"] is None else _require_number(sens, "height", "sensitivity"),
            ),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
