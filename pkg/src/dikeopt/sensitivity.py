"""Local (one-at-a-time) and global (Sobol) sensitivity analysis.

Models are batch callables: f(columns) -> (N,) outputs, where columns maps
parameter names to equal-length sample arrays. `make_objective_model` adapts
a dike model version and objective to this shape at a fixed heightening.

OAT sweeps each parameter across the 1st-99th percentiles of its prior while
holding the others at their prior medians, and reports normalized output
ranges. The Sobol analysis draws a scrambled quasirandom cross-sampling
design on the unit cube, maps it through the priors' inverse CDFs, and
estimates first-order and total-order indices with Jansen's formulas plus
second-order indices from the extended (crossed) matrix scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, NumericalError
from .objectives import ModelSetup, evaluate_grid
from .rng import substream
from .uncertainty import PriorSpec, inverse_cdf, prior_median

__all__ = [
    "SensitivityReport",
    "oat_sweep",
    "sobol_indices",
    "rank_parameters",
    "merge_reports",
    "make_objective_model",
    "ishigami",
]

_UNIT_EPS = 1e-12  # quasirandom u=0 would hit the open-interval quantile domain


@dataclass(frozen=True)
class SensitivityReport:
    """Per-parameter OAT and/or Sobol results for one objective and height.

    Reported Sobol indices are clamped to [0, 1]; the raw estimates (which
    may be slightly negative from estimator noise) ride along for
    diagnostics. Fields belonging to an analysis that was not run are None.
    """

    names: tuple[str, ...]
    objective: str | None = None
    height: float | None = None
    # one-at-a-time sweep
    oat_values: np.ndarray | None = None  # (d, points) parameter values
    oat_outputs: np.ndarray | None = None  # (d, points) model outputs
    oat_ranges: np.ndarray | None = None  # (d,) output max - min
    oat_shares: np.ndarray | None = None  # (d,) range / sum of ranges
    oat_insensitive: np.ndarray | None = None  # (d,) bool, range < 1% of max
    # Sobol indices
    first_order: np.ndarray | None = None  # (d,) clamped
    total_order: np.ndarray | None = None  # (d,) clamped
    second_order: np.ndarray | None = None  # (d, d) clamped, symmetric, 0 diagonal
    raw_first: np.ndarray | None = None
    raw_total: np.ndarray | None = None
    raw_second: np.ndarray | None = None
    n_base: int | None = None
    n_evaluations: int | None = None


def make_objective_model(
    setup: ModelSetup, objective: str, height: float
) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
    """Adapt one model version + objective at a fixed heightening to f(columns)."""

    def model(cols: Mapping[str, np.ndarray]) -> np.ndarray:
        solutions = evaluate_grid(cols, np.asarray([height]), setup)
        return solutions.objective(objective)[:, 0]

    return model


def ishigami(cols: Mapping[str, np.ndarray], a: float = 7.0, b: float = 0.1) -> np.ndarray:
    """Standard three-parameter test function with known variance decomposition."""
    x1, x2, x3 = (np.asarray(cols[k], dtype=float) for k in ("x1", "x2", "x3"))
    return np.sin(x1) + a * np.sin(x2) ** 2 + b * x3**4 * np.sin(x1)


def oat_sweep(
    model: Callable[[Mapping[str, np.ndarray]], np.ndarray],
    priors: Mapping[str, PriorSpec],
    points_per_param: int = 21,
    objective: str | None = None,
    height: float | None = None,
) -> SensitivityReport:
    """One-at-a-time percentile sweep; outputs normalized by range.

    Each parameter runs over `points_per_param` equally spaced percentiles
    from the 1st to the 99th; the rest stay at their prior medians.
    Parameters whose output range is under 1% of the largest range are
    flagged insensitive (all of them when every range is zero).
    """
    if points_per_param < 3:
        raise ValueError(f"points_per_param must be >= 3, got {points_per_param}")
    if not priors:
        raise ValueError("priors must be nonempty")
    names = tuple(priors)
    medians = {name: prior_median(priors[name]) for name in names}
    u = np.linspace(0.01, 0.99, points_per_param)

    d = len(names)
    values = np.empty((d, points_per_param))
    outputs = np.empty((d, points_per_param))
    for i, name in enumerate(names):
        values[i] = inverse_cdf(priors[name], u)
        cols = {
            other: np.full(points_per_param, medians[other]) if other != name else values[i]
            for other in names
        }
        outputs[i] = _run_model(model, cols, f"OAT sweep of {name!r}")
    ranges = outputs.max(axis=1) - outputs.min(axis=1)
    max_range = ranges.max()
    total = ranges.sum()
    shares = ranges / total if total > 0 else np.zeros(d)
    insensitive = ranges < 0.01 * max_range if max_range > 0 else np.ones(d, dtype=bool)
    return SensitivityReport(
        names=names,
        objective=objective,
        height=height,
        oat_values=values,
        oat_outputs=outputs,
        oat_ranges=ranges,
        oat_shares=shares,
        oat_insensitive=insensitive,
    )


def _run_model(model, cols: dict[str, np.ndarray], label: str) -> np.ndarray:
    try:
        out = np.asarray(model(cols), dtype=float)
    except Exception as exc:
        first = {k: float(v[0]) for k, v in cols.items()}
        raise NumericalError(f"model evaluation failed during {label}; first sample {first}") from exc
    n = next(iter(cols.values())).size
    if out.shape != (n,):
        raise NumericalError(f"model returned shape {out.shape}, expected ({n},) during {label}")
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        sample = {k: float(v[bad]) for k, v in cols.items()}
        raise NumericalError(f"model returned non-finite output during {label} at sample {sample}")
    return out


def sobol_indices(
    model: Callable[[Mapping[str, np.ndarray]], np.ndarray],
    priors: Mapping[str, PriorSpec],
    n_base: int = 1024,
    seed: int = 0,
    second_order: bool = True,
    objective: str | None = None,
    height: float | None = None,
    stream: str = "sobol",
) -> SensitivityReport:
    """Variance-based first-, total-, and second-order Sobol indices.

    `n_base` must be a power of two >= 64 (quasirandom balance). The design
    costs n_base * (2d + 2) model evaluations with second-order indices,
    n_base * (d + 2) without. Deterministic for a fixed seed.
    """
    if n_base < 64 or (n_base & (n_base - 1)) != 0:
        raise ValueError(f"n_base must be a power of two >= 64, got {n_base}")
    if not priors:
        raise ValueError("priors must be nonempty")
    names = tuple(priors)
    d = len(names)

    sampler = qmc.Sobol(d=2 * d, scramble=True, seed=substream(seed, stream))
    unit = np.clip(sampler.random(n_base), _UNIT_EPS, 1.0 - _UNIT_EPS)

    def transform(u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for i, name in enumerate(names):
            out[:, i] = inverse_cdf(priors[name], u[:, i])
        return out

    A = transform(unit[:, :d])
    B = transform(unit[:, d:])

    def run(mat: np.ndarray, label: str) -> np.ndarray:
        return _run_model(model, {name: mat[:, i] for i, name in enumerate(names)}, label)

    f_A = run(A, "Sobol matrix A")
    f_B = run(B, "Sobol matrix B")
    f_AB = np.empty((d, n_base))
    for i in range(d):
        AB = A.copy()
        AB[:, i] = B[:, i]
        f_AB[i] = run(AB, f"Sobol matrix AB_{names[i]}")
    f_BA = None
    if second_order:
        f_BA = np.empty((d, n_base))
        for i in range(d):
            BA = B.copy()
            BA[:, i] = A[:, i]
            f_BA[i] = run(BA, f"Sobol matrix BA_{names[i]}")

    variance = float(np.var(np.concatenate([f_A, f_B])))
    if variance == 0.0:
        zeros = np.zeros(d)
        zmat = np.zeros((d, d)) if second_order else None
        return SensitivityReport(
            names=names,
            objective=objective,
            height=height,
            first_order=zeros,
            total_order=zeros.copy(),
            second_order=zmat,
            raw_first=zeros.copy(),
            raw_total=zeros.copy(),
            raw_second=None if zmat is None else zmat.copy(),
            n_base=n_base,
            n_evaluations=n_base * ((2 * d + 2) if second_order else (d + 2)),
        )

    # Jansen estimators
    raw_first = (variance - 0.5 * np.mean((f_B - f_AB) ** 2, axis=1)) / variance
    raw_total = 0.5 * np.mean((f_A - f_AB) ** 2, axis=1) / variance

    raw_second = None
    if second_order:
        raw_second = np.zeros((d, d))
        cross = np.mean(f_A * f_B)
        for i in range(d):
            for j in range(i + 1, d):
                closed_ij = (np.mean(f_BA[i] * f_AB[j]) - cross) / variance
                s_ij = closed_ij - raw_first[i] - raw_first[j]
                raw_second[i, j] = raw_second[j, i] = s_ij

    return SensitivityReport(
        names=names,
        objective=objective,
        height=height,
        first_order=np.clip(raw_first, 0.0, 1.0),
        total_order=np.clip(raw_total, 0.0, 1.0),
        second_order=None if raw_second is None else np.clip(raw_second, 0.0, 1.0),
        raw_first=raw_first,
        raw_total=raw_total,
        raw_second=raw_second,
        n_base=n_base,
        n_evaluations=n_base * ((2 * d + 2) if second_order else (d + 2)),
    )


def rank_parameters(report: SensitivityReport, order: str = "total") -> list[str]:
    """Parameter names descending by the chosen index; ties break by name."""
    if order == "first":
        values = report.first_order
    elif order == "total":
        values = report.total_order
    elif order == "oat":
        values = report.oat_shares
    else:
        raise ConfigError(f"order must be 'first', 'total', or 'oat', got {order!r}")
    if values is None:
        raise ValueError(f"report does not contain {order!r} indices")
    pairs = sorted(zip(report.names, values), key=lambda kv: (-kv[1], kv[0]))
    return [name for name, _ in pairs]


def merge_reports(oat: SensitivityReport, sobol: SensitivityReport) -> SensitivityReport:
    """Combine an OAT report and a Sobol report over the same parameters."""
    if oat.names != sobol.names:
        raise ValueError(f"parameter sets differ: {oat.names} vs {sobol.names}")
    return replace(
        sobol,
        oat_values=oat.oat_values,
        oat_outputs=oat.oat_outputs,
        oat_ranges=oat.oat_ranges,
        oat_shares=oat.oat_shares,
        oat_insensitive=oat.oat_insensitive,
        objective=sobol.objective or oat.objective,
        height=sobol.height if sobol.height is not None else oat.height,
    )
