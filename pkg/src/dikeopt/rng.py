"""Deterministic named random substreams.

All randomness in a run flows from the single config seed. Each consumer
(ensemble generation, residual bootstrap, MCMC, Sobol sampling, synthetic
records) pulls its own substream by name, so adding or reordering stages
never perturbs the draws of another stage.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "substream_seed"]


def substream_seed(seed: int, name: str) -> np.random.SeedSequence:
    """Seed material for the named substream of a master seed."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.SeedSequence(entropy=[int(seed), tag])


def substream(seed: int, name: str) -> np.random.Generator:
    """A Generator for the named substream, deterministic in (seed, name)."""
    return np.random.default_rng(substream_seed(seed, name))
