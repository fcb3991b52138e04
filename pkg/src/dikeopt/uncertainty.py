"""Prior distributions and Latin-hypercube ensemble generation.

Uncertain parameters are described by PriorSpec marginals (normal, lognormal,
uniform, beta-scaled). Ensembles of states of the world (SOW) are built by
stratified Latin-hypercube sampling of the unit cube followed by inverse-CDF
transforms, so every 1-D projection of the design is a stratified sample.

Optional (low, high) bounds on normal/lognormal/uniform priors restrict the
distribution to the admissible region: the unit sample is mapped into
[F(low), F(high)] before inversion, which yields exactly the truncated law
while preserving the hypercube stratification. For the beta-scaled family the
bounds are the affine support, not a truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
from scipy import stats

from .rng import substream

__all__ = [
    "PriorSpec",
    "StateOfTheWorld",
    "SowEnsemble",
    "lhs_sample",
    "inverse_cdf",
    "prior_cdf",
    "prior_median",
    "generate_sows",
    "ensemble_expectation",
]

_FAMILIES = ("normal", "lognormal", "lognormal-moments", "uniform", "beta-scaled")


@dataclass(frozen=True)
class PriorSpec:
    """Marginal prior for one uncertain parameter.

    Parameter meaning by family:
      normal             param1 = mean, param2 = standard deviation
      lognormal          param1 = median, param2 = standard deviation of log
      lognormal-moments  param1 = mean, param2 = standard deviation (natural units)
      uniform            param1 = low, param2 = high
      beta-scaled        param1, param2 = beta shape parameters; bounds required
    """

    family: str
    param1: float
    param2: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}; expected one of {_FAMILIES}")
        if self.family in ("normal", "lognormal", "lognormal-moments") and self.param2 <= 0:
            raise ValueError(f"{self.family} prior needs a positive scale, got {self.param2}")
        if self.family in ("lognormal", "lognormal-moments") and self.param1 <= 0:
            raise ValueError(f"{self.family} prior needs a positive location, got {self.param1}")
        if self.family == "uniform" and self.param2 <= self.param1:
            raise ValueError("uniform prior needs param1 < param2")
        if self.family == "beta-scaled":
            if self.param1 <= 0 or self.param2 <= 0:
                raise ValueError("beta-scaled prior needs positive shape parameters")
            if self.bounds is None:
                raise ValueError("beta-scaled prior requires bounds (low, high)")
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise ValueError(f"bounds must be ordered, got {self.bounds}")


def _frozen(prior: PriorSpec):
    """The scipy distribution behind a prior, ignoring truncation bounds."""
    if prior.family == "normal":
        return stats.norm(loc=prior.param1, scale=prior.param2)
    if prior.family == "lognormal":
        return stats.lognorm(s=prior.param2, scale=prior.param1)
    if prior.family == "lognormal-moments":
        mean, sd = prior.param1, prior.param2
        sigma2 = np.log1p((sd / mean) ** 2)
        return stats.lognorm(s=np.sqrt(sigma2), scale=mean * np.exp(-sigma2 / 2.0))
    if prior.family == "uniform":
        return stats.uniform(loc=prior.param1, scale=prior.param2 - prior.param1)
    if prior.family == "beta-scaled":
        low, high = prior.bounds
        return stats.beta(prior.param1, prior.param2, loc=low, scale=high - low)
    raise AssertionError(prior.family)


def inverse_cdf(prior: PriorSpec, u) -> np.ndarray | float:
    """The u-quantile of the prior (bounds-aware), for u in (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie strictly inside (0, 1)")
    dist = _frozen(prior)
    if prior.bounds is not None and prior.family != "beta-scaled":
        lo, hi = dist.cdf(prior.bounds[0]), dist.cdf(prior.bounds[1])
        u = lo + u * (hi - lo)
    x = dist.ppf(u)
    return float(x) if x.ndim == 0 else x


def prior_cdf(prior: PriorSpec, x) -> np.ndarray | float:
    """CDF of the prior (bounds-aware)."""
    dist = _frozen(prior)
    F = dist.cdf(np.asarray(x, dtype=float))
    if prior.bounds is not None and prior.family != "beta-scaled":
        lo, hi = dist.cdf(prior.bounds[0]), dist.cdf(prior.bounds[1])
        F = np.clip((F - lo) / (hi - lo), 0.0, 1.0)
    return float(F) if F.ndim == 0 else F


def prior_pdf(prior: PriorSpec, x) -> np.ndarray | float:
    """Density of the prior (bounds-aware; zero outside the bounds)."""
    dist = _frozen(prior)
    x = np.asarray(x, dtype=float)
    d = dist.pdf(x)
    if prior.bounds is not None and prior.family != "beta-scaled":
        lo, hi = dist.cdf(prior.bounds[0]), dist.cdf(prior.bounds[1])
        inside = (x >= prior.bounds[0]) & (x <= prior.bounds[1])
        d = np.where(inside, d / (hi - lo), 0.0)
    return float(d) if d.ndim == 0 else d


def prior_median(prior: PriorSpec) -> float:
    return float(inverse_cdf(prior, 0.5))


def lhs_sample(n: int, d: int, rng: np.random.Generator | int) -> np.ndarray:
    """Latin-hypercube sample: n rows, d columns, values in [0, 1).

    Per column, exactly one value falls in each stratum [j/n, (j+1)/n); the
    position within a stratum is uniform and strata are permuted independently
    per column.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    u = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        u[:, j] = (strata + rng.random(n)) / n
    return u


@dataclass(frozen=True)
class StateOfTheWorld:
    """One joint sample of all uncertain parameters."""

    index: int
    values: Mapping[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class SowEnsemble:
    """Columnar ensemble of states of the world; immutable after construction."""

    columns: Mapping[str, np.ndarray]
    seed: int
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        names = tuple(self.columns.keys())
        object.__setattr__(self, "names", names)
        sizes = {v.size for v in self.columns.values()}
        if len(sizes) > 1:
            raise ValueError(f"ragged ensemble columns: {sizes}")
        for v in self.columns.values():
            v.flags.writeable = False

    def __len__(self) -> int:
        return next(iter(self.columns.values())).size if self.columns else 0

    def __getitem__(self, i: int) -> StateOfTheWorld:
        return StateOfTheWorld(index=i, values={k: float(v[i]) for k, v in self.columns.items()})

    def __iter__(self) -> Iterator[StateOfTheWorld]:
        return (self[i] for i in range(len(self)))


def generate_sows(
    priors: Mapping[str, PriorSpec], n: int = 10_000, seed: int = 0, stream: str = "ensemble"
) -> SowEnsemble:
    """Latin-hypercube ensemble of n SOW over the given prior marginals.

    Deterministic for a fixed seed regardless of later evaluation order.
    """
    if not priors:
        raise ValueError("priors must be nonempty")
    names = list(priors.keys())
    u = lhs_sample(n, len(names), substream(seed, stream))
    cols = {name: np.asarray(inverse_cdf(priors[name], u[:, j])) for j, name in enumerate(names)}
    return SowEnsemble(columns=cols, seed=seed)


def ensemble_expectation(values) -> float:
    """Arithmetic mean across the ensemble."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot take the expectation of an empty ensemble")
    return float(values.mean())
