"""Economic dike-heightening model.

Linear investment cost, exponentially decaying annual flood frequency of the
effective (transient) dike height, discounted expected damages over a fixed
horizon, and grid-search optimization of the heightening decision.

Conventions: heights in meters, currency in guilders (plain floats, no unit
layer), years indexed t = 1..T with discounting starting at t = 1. The annual
flood frequency at zero heightening and t = 0 equals the configured initial
frequency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EconomicParams",
    "FloodFrequencyParams",
    "DikePolicy",
    "investment_cost",
    "effective_height",
    "annual_flood_probability",
    "discounted_damages",
    "total_cost",
    "optimize_height",
    "default_height_grid",
    "linear_slr",
]

DEFAULT_HORIZON = 75


@dataclass(frozen=True)
class EconomicParams:
    """Value of protected goods, effective discount rate, heightening cost rate."""

    value_of_goods: float = 2.0e10  # guilders
    discount_rate: float = 0.02  # fraction per year
    cost_rate: float = 4.2e7  # guilders per meter of heightening

    def __post_init__(self):
        if self.value_of_goods < 0:
            raise ValueError(f"value_of_goods must be >= 0, got {self.value_of_goods}")
        if self.cost_rate <= 0:
            raise ValueError(f"cost_rate must be > 0, got {self.cost_rate}")
        if self.discount_rate <= -1:
            raise ValueError(f"discount_rate must exceed -1, got {self.discount_rate}")


@dataclass(frozen=True)
class FloodFrequencyParams:
    """Initial annual flood frequency and its exponential decay per meter."""

    initial_frequency: float = 0.0038  # probability per year at zero effective height
    decay_rate: float = 2.6  # per meter

    def __post_init__(self):
        if not 0.0 <= self.initial_frequency <= 1.0:
            raise ValueError(
                f"initial_frequency must be in [0, 1], got {self.initial_frequency}"
            )
        if self.decay_rate <= 0:
            raise ValueError(f"decay_rate must be > 0, got {self.decay_rate}")


@dataclass(frozen=True)
class DikePolicy:
    """A candidate heightening decision over a fixed project horizon."""

    heightening: float  # meters
    horizon: int = DEFAULT_HORIZON  # years

    def __post_init__(self):
        if self.heightening < 0:
            raise ValueError(f"heightening must be >= 0, got {self.heightening}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")


def linear_slr(rate: float) -> Callable[[np.ndarray], np.ndarray]:
    """Sea-level trajectory rising linearly at `rate` meters per year."""

    def slr_at(t):
        return rate * np.asarray(t, dtype=float)

    return slr_at


def investment_cost(econ: EconomicParams, policy: DikePolicy) -> float:
    """Up-front cost of raising the dike: cost rate times heightening."""
    return econ.cost_rate * policy.heightening


def effective_height(
    X: float, t, eta: float, slr_at: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray | float:
    """Heightening remaining at time t after subsidence and sea-level rise.

    Negative values are valid and mean the dike sits below the reference
    flood level.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = X - eta * t - np.asarray(slr_at(t), dtype=float)
    return float(out) if out.ndim == 0 else out


def annual_flood_probability(freq: FloodFrequencyParams, H_E) -> np.ndarray | float:
    """Annual probability of overtopping at effective height H_E, clamped to [0, 1]."""
    p = freq.initial_frequency * np.exp(-freq.decay_rate * np.asarray(H_E, dtype=float))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def _discount_factors(rate: float, horizon: int) -> np.ndarray:
    t = np.arange(1, horizon + 1, dtype=float)
    return (1.0 + rate) ** (-t)


def discounted_damages(
    econ: EconomicParams,
    freq: FloodFrequencyParams,
    policy: DikePolicy,
    eta: float,
    slr_at: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Expected flood damages discounted over t = 1..T."""
    t = np.arange(1, policy.horizon + 1, dtype=float)
    H = effective_height(policy.heightening, t, eta, slr_at)
    p = annual_flood_probability(freq, H)
    return float(np.sum(p * econ.value_of_goods * _discount_factors(econ.discount_rate, policy.horizon)))


def total_cost(
    econ: EconomicParams,
    freq: FloodFrequencyParams,
    policy: DikePolicy,
    eta: float,
    slr_at: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Investment cost plus discounted damages."""
    return investment_cost(econ, policy) + discounted_damages(econ, freq, policy, eta, slr_at)


def default_height_grid(low: float = 0.0, high: float = 10.0, step: float = 0.05) -> np.ndarray:
    """Candidate heightenings, 0 to 10 m in 5 cm increments by default (201 points)."""
    n = int(round((high - low) / step))
    return np.round(low + step * np.arange(n + 1), 10)


def optimize_height(
    econ: EconomicParams,
    freq: FloodFrequencyParams,
    horizon: int,
    eta: float,
    slr_at: Callable[[np.ndarray], np.ndarray],
    grid: Sequence[float] | np.ndarray | None = None,
):
    """Grid search for the heightening minimizing total cost.

    Returns (best_height, curve) where curve is a record array with one row
    per grid height: height, investment, flood_probability (time mean),
    damages, total_cost. Ties are broken toward the smallest height.
    """
    if grid is None:
        grid = default_height_grid()
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("height grid must be nonempty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("height grid must be strictly increasing")

    t = np.arange(1, horizon + 1, dtype=float)
    slr = np.asarray(slr_at(t), dtype=float)
    disc = _discount_factors(econ.discount_rate, horizon)

    # losses common to every candidate height
    sunk = eta * t + slr
    investment = econ.cost_rate * grid
    flood = np.empty_like(grid)
    damages = np.empty_like(grid)
    for i, X in enumerate(grid):
        p = np.clip(freq.initial_frequency * np.exp(-freq.decay_rate * (X - sunk)), 0.0, 1.0)
        flood[i] = p.mean()
        damages[i] = np.sum(p * disc) * econ.value_of_goods
    total = investment + damages

    curve = np.rec.fromarrays(
        [grid, investment, flood, damages, total],
        names=["height", "investment", "flood_probability", "damages", "total_cost"],
    )
    best = int(np.argmin(total))  # argmin takes the first (smallest) height on ties
    return float(grid[best]), curve
