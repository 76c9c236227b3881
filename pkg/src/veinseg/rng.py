"""Named random sub-streams derived from one experiment seed.

Each consumer (data order, dropout masks, BRA switch draws, crop boxes,
weight init, fold split) gets its own generator so that toggling one
feature never shifts the draws seen by another.
"""
import os

import numpy as np

STREAMS = ("data", "dropout", "bra", "crop", "init", "split", "synth")
SEED_ENV = "VEINSEG_SEED"


def stream(seed: int, name: str) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS.index(name)]))


def streams(seed: int) -> dict:
    return {name: stream(seed, name) for name in STREAMS}


def resolve_seed(seed=None, default: int = 0) -> int:
    """Explicit seed wins, then $VEINSEG_SEED, then `default`."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    return default
