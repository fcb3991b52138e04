"""Four-objective evaluation over (SOW x height) grids, Pareto fronts,
satisficing thresholds, and expected trade-off curves.

The four management objectives, all minimized:

- investment: k * X, guilders
- flood_probability: time mean over t = 1..T of the annual flood probability
- damages: discounted sum over t = 1..T of probability * value of goods
- total_cost: investment + damages (exactly additive)

Model versions differ in where uncertainty enters:

- ``baseline``: point parameters, linear sea-level rise phi * t
- ``parametric``: per-SOW (V, discount rate, k, subsidence), linear rise
- ``slr_upgraded``: adds per-SOW quadratic + abrupt-ramp sea-level curves
- ``surge_upgraded``: additionally replaces p0 * exp(-alpha * H_E) with the
  GEV exceedance of the gauge level corresponding to the effective height

In the surge version the datum is the gauge level (mm) whose exceedance
probability equals p0 under the central surge fit, so zero heightening at
t=0 reproduces the initial flood frequency.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import FloodFrequencyParams
from .errors import ConfigError
from .surge import gev_exceedance

__all__ = [
    "MODEL_VERSIONS",
    "OBJECTIVE_NAMES",
    "ECON_COLUMNS",
    "SLR_COLUMNS",
    "GEV_COLUMNS",
    "ObjectiveVector",
    "SolutionRecord",
    "SolutionSet",
    "ModelSetup",
    "required_columns",
    "evaluate_objectives",
    "evaluate_grid",
    "TradeoffCurve",
    "expected_tradeoffs",
    "pareto_filter",
    "SatisficeResult",
    "satisfice",
    "density_histogram",
]

MODEL_VERSIONS = ("baseline", "parametric", "slr_upgraded", "surge_upgraded")
OBJECTIVE_NAMES = ("total_cost", "investment", "flood_probability", "damages")

ECON_COLUMNS = ("value_of_goods", "discount_rate", "cost_rate", "subsidence_rate")
SLR_COLUMNS = ("slr_a", "slr_b", "slr_c", "slr_c_star", "slr_t_star")
GEV_COLUMNS = ("gev_location", "gev_scale", "gev_shape")


@dataclass(frozen=True)
class ObjectiveVector:
    """One (SOW, height) outcome; total_cost = investment + damages."""

    total_cost: float  # guilders
    investment: float  # guilders
    flood_probability: float  # per year, time-averaged
    damages: float  # guilders, discounted

    def __post_init__(self):
        vals = (self.total_cost, self.investment, self.flood_probability, self.damages)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"objectives must be finite and nonnegative, got {vals}")
        resid = abs(self.total_cost - (self.investment + self.damages))
        if resid > 1e-9 * max(1.0, abs(self.total_cost)):
            raise ValueError(
                f"total_cost must equal investment + damages "
                f"({self.total_cost} vs {self.investment + self.damages})"
            )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.total_cost, self.investment, self.flood_probability, self.damages]
        )


@dataclass(frozen=True)
class SolutionRecord:
    """One evaluated (SOW, height) pair."""

    sow_index: int
    height_index: int
    heightening: float  # meters
    objectives: ObjectiveVector


@dataclass(frozen=True)
class ModelSetup:
    """Fixed (non-SOW) ingredients of one model version."""

    version: str
    frequency: FloodFrequencyParams = FloodFrequencyParams()
    horizon: int = 75
    slr_rate: float = 0.008  # m/yr linear rise, baseline & parametric versions
    abrupt_mode: str = "ramp"  # how c_star enters the upgraded curve
    datum_mm: float | None = None  # surge_upgraded: level with exceedance p0

    def __post_init__(self):
        if self.version not in MODEL_VERSIONS:
            raise ConfigError(
                f"unknown model version {self.version!r}; expected one of {MODEL_VERSIONS}"
            )
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.abrupt_mode not in ("ramp", "step"):
            raise ConfigError(f"abrupt_mode must be 'ramp' or 'step', got {self.abrupt_mode!r}")
        if self.version == "surge_upgraded" and self.datum_mm is None:
            raise ConfigError("surge_upgraded requires datum_mm (run the GEV fit first)")


def required_columns(version: str) -> tuple[str, ...]:
    """SOW column names a model version consumes."""
    if version in ("baseline", "parametric"):
        return ECON_COLUMNS
    if version == "slr_upgraded":
        return ECON_COLUMNS + SLR_COLUMNS
    if version == "surge_upgraded":
        return ECON_COLUMNS + SLR_COLUMNS + GEV_COLUMNS
    raise ConfigError(f"unknown model version {version!r}; expected one of {MODEL_VERSIONS}")


def _as_columns(sows, version: str) -> dict[str, np.ndarray]:
    """Normalize an ensemble / single SOW to 1-d column arrays."""
    if hasattr(sows, "columns"):
        mapping = sows.columns
    elif hasattr(sows, "values") and isinstance(getattr(sows, "values"), Mapping):
        mapping = getattr(sows, "values")  # single StateOfTheWorld
    else:
        mapping = sows
    cols = {}
    for name in required_columns(version):
        if name not in mapping:
            raise ConfigError(f"model version {version!r} needs SOW column {name!r}")
        cols[name] = np.atleast_1d(np.asarray(mapping[name], dtype=float))
    n = len(next(iter(cols.values())))
    if any(v.size != n for v in cols.values()):
        raise ConfigError("SOW columns must share one length")
    return cols


class _Prepared:
    """Per-ensemble precomputation shared across heights."""

    __slots__ = ("setup", "n", "cost_rate", "disc_value", "flood_kernel")

    def __init__(self, cols: dict[str, np.ndarray], setup: ModelSetup):
        self.setup = setup
        T = setup.horizon
        t = np.arange(1, T + 1, dtype=float)
        V = cols["value_of_goods"]
        delta = cols["discount_rate"]
        self.cost_rate = cols["cost_rate"]
        eta = cols["subsidence_rate"]
        self.n = V.size
        if np.any(delta <= -1.0):
            raise ConfigError("discount_rate must exceed -1")
        self.disc_value = V[:, None] * (1.0 + delta[:, None]) ** (-t)  # (n, T)

        if setup.version in ("baseline", "parametric"):
            slr = setup.slr_rate * t  # meters, broadcasts over SOW
        else:
            b, c = cols["slr_b"][:, None], cols["slr_c"][:, None]
            c_star, t_star = cols["slr_c_star"][:, None], cols["slr_t_star"][:, None]
            slr = b * t + c * t * t  # rise since t=0; the intercept cancels
            if setup.abrupt_mode == "ramp":
                slr = slr + c_star * np.maximum(0.0, t - t_star)
            else:
                slr = slr + c_star * (t > t_star)
        sunk = eta[:, None] * t + slr  # meters lost to subsidence + rise, (n, T)

        freq = setup.frequency
        if setup.version == "surge_upgraded":
            mu = cols["gev_location"][:, None]
            sigma = cols["gev_scale"][:, None]
            xi = cols["gev_shape"][:, None]
            if np.any(sigma <= 0):
                raise ConfigError("gev_scale must be positive in every SOW")
            base_level = setup.datum_mm - 1000.0 * sunk  # mm, (n, T)

            def kernel(X: float) -> np.ndarray:
                return gev_exceedance(base_level + 1000.0 * X, mu, sigma, xi)

        else:
            # p(t) = min(1, p0 exp(-alpha(X - sunk))) factors into a per-height
            # scalar times this precomputed field.
            zero_height = freq.initial_frequency * np.exp(freq.decay_rate * sunk)

            def kernel(X: float) -> np.ndarray:
                return np.minimum(1.0, np.exp(-freq.decay_rate * X) * zero_height)

        self.flood_kernel = kernel

    def eval_height(self, X: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(investment, flood probability, damages) columns at one height."""
        p = self.flood_kernel(X)
        return self.cost_rate * X, p.mean(axis=1), (p * self.disc_value).sum(axis=1)


@dataclass(frozen=True)
class SolutionSet:
    """Columnar objectives over an (n_sow, n_height) grid."""

    version: str
    heights: np.ndarray  # (m,) meters
    investment: np.ndarray  # (n, m) guilders
    flood_probability: np.ndarray  # (n, m) per year
    damages: np.ndarray  # (n, m) guilders
    total_cost: np.ndarray  # (n, m) guilders

    @property
    def n_sow(self) -> int:
        return self.total_cost.shape[0]

    @property
    def n_solutions(self) -> int:
        return int(self.total_cost.size)

    def objective(self, name: str) -> np.ndarray:
        if name not in OBJECTIVE_NAMES:
            raise ConfigError(f"unknown objective {name!r}; expected one of {OBJECTIVE_NAMES}")
        return getattr(self, name)

    def record(self, sow_index: int, height_index: int) -> SolutionRecord:
        n, m = self.total_cost.shape
        if not (0 <= sow_index < n and 0 <= height_index < m):
            raise IndexError(f"({sow_index}, {height_index}) outside ({n}, {m}) grid")
        return SolutionRecord(
            sow_index=sow_index,
            height_index=height_index,
            heightening=float(self.heights[height_index]),
            objectives=ObjectiveVector(
                total_cost=float(self.total_cost[sow_index, height_index]),
                investment=float(self.investment[sow_index, height_index]),
                flood_probability=float(self.flood_probability[sow_index, height_index]),
                damages=float(self.damages[sow_index, height_index]),
            ),
        )


def evaluate_grid(sows, heights, setup: ModelSetup, threads: int = 1) -> SolutionSet:
    """Evaluate all four objectives for every (SOW, height) pair.

    Heights must be strictly increasing. Work is split per height across
    `threads` workers into preallocated columns, so results are identical for
    any thread count.
    """
    heights = np.asarray(heights, dtype=float)
    if heights.ndim != 1 or heights.size == 0:
        raise ValueError("heights must be a nonempty 1-d sequence")
    if np.any(np.diff(heights) <= 0):
        raise ValueError("heights must be strictly increasing")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    prep = _Prepared(_as_columns(sows, setup.version), setup)
    n, m = prep.n, heights.size
    inv = np.empty((n, m))
    flood = np.empty((n, m))
    dam = np.empty((n, m))

    def fill(j: int) -> None:
        inv[:, j], flood[:, j], dam[:, j] = prep.eval_height(float(heights[j]))

    if threads == 1:
        for j in range(m):
            fill(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(m)))

    return SolutionSet(
        version=setup.version,
        heights=heights,
        investment=inv,
        flood_probability=flood,
        damages=dam,
        total_cost=inv + dam,
    )


def evaluate_objectives(sow, X: float, setup: ModelSetup) -> ObjectiveVector:
    """Objectives for a single SOW at a single heightening (meters)."""
    prep = _Prepared(_as_columns(sow, setup.version), setup)
    if prep.n != 1:
        raise ValueError("evaluate_objectives expects a single SOW; use evaluate_grid")
    inv, flood, dam = prep.eval_height(float(X))
    return ObjectiveVector(
        total_cost=float(inv[0] + dam[0]),
        investment=float(inv[0]),
        flood_probability=float(flood[0]),
        damages=float(dam[0]),
    )


@dataclass(frozen=True)
class TradeoffCurve:
    """Per-height ensemble means and the expected-total-cost minimizer."""

    heights: np.ndarray
    total_cost: np.ndarray
    investment: np.ndarray
    flood_probability: np.ndarray
    damages: np.ndarray
    best_index: int

    @property
    def best_height(self) -> float:
        return float(self.heights[self.best_index])


def expected_tradeoffs(solutions: SolutionSet) -> TradeoffCurve:
    """Mean objectives per height across SOW (ties resolve to the lowest height)."""
    mean_total = solutions.total_cost.mean(axis=0)
    return TradeoffCurve(
        heights=solutions.heights,
        total_cost=mean_total,
        investment=solutions.investment.mean(axis=0),
        flood_probability=solutions.flood_probability.mean(axis=0),
        damages=solutions.damages.mean(axis=0),
        best_index=int(np.argmin(mean_total)),
    )


def _points_matrix(points, objectives) -> tuple[np.ndarray, list]:
    if isinstance(points, np.ndarray):
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        names = list(range(P.shape[1])) if objectives is None else list(objectives)
        if objectives is not None:
            P = P[:, list(objectives)]
        return P, names
    seq = list(points)
    if seq and isinstance(seq[0], ObjectiveVector):
        names = list(OBJECTIVE_NAMES) if objectives is None else list(objectives)
        for name in names:
            if name not in OBJECTIVE_NAMES:
                raise ConfigError(f"unknown objective {name!r}")
        return np.array([[getattr(p, nm) for nm in names] for p in seq]), names
    return _points_matrix(np.asarray(seq, dtype=float), objectives)


def pareto_filter(points, objectives=None) -> tuple[np.ndarray, np.ndarray]:
    """Nondominated subset under minimization of the selected objectives.

    `points` is an (n, k) array or a sequence of ObjectiveVector;
    `objectives` optionally selects columns (indices) or objective names.
    A point survives iff no other point is <= in every selected objective and
    < in at least one. Returns (front, indices) sorted lexicographically by
    objective values; `indices` refer to the input order.
    """
    P, _ = _points_matrix(points, objectives)
    n = P.shape[0]
    if n == 0:
        raise ValueError("pareto_filter needs at least one point")
    keep = np.ones(n, dtype=bool)
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        A = P[lo:hi, None, :]  # candidates
        B = P[None, :, :]  # potential dominators
        dominated = ((B <= A).all(axis=2) & (B < A).any(axis=2)).any(axis=1)
        keep[lo:hi] = ~dominated
    idx = np.flatnonzero(keep)
    order = np.lexsort(tuple(P[idx, col] for col in range(P.shape[1] - 1, -1, -1)))
    idx = idx[order]
    return P[idx], idx


@dataclass(frozen=True)
class SatisficeResult:
    """Solutions meeting every threshold strictly, and their fraction."""

    mask: np.ndarray  # (n_sow, n_height) bool
    fraction: float
    thresholds: dict

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(sow_index, height_index) arrays of the surviving solutions."""
        return np.nonzero(self.mask)


def satisfice(solutions: SolutionSet, thresholds: Mapping[str, float]) -> SatisficeResult:
    """Keep (SOW, height) pairs strictly under every named upper bound.

    Threshold keys must be objective names; unknown names are a config error.
    Tightening any threshold never increases the fraction.
    """
    mask = np.ones(solutions.total_cost.shape, dtype=bool)
    for name, bound in thresholds.items():
        mask &= solutions.objective(name) < float(bound)
    frac = float(mask.sum()) / mask.size
    return SatisficeResult(mask=mask, fraction=frac, thresholds=dict(thresholds))


def density_histogram(
    solutions: SolutionSet, x: str, y: str, bins: int = 64
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2-D histogram counts of two objectives over all (SOW, height) pairs.

    Plot-ready stand-in for density shading: returns (x_edges, y_edges,
    counts) with counts shaped (len(x_edges)-1, len(y_edges)-1).
    """
    xs = solutions.objective(x).ravel()
    ys = solutions.objective(y).ravel()
    counts, xe, ye = np.histogram2d(xs, ys, bins=bins)
    return xe, ye, counts
