"""Deterministic random-stream derivation from one master seed.

Every random draw in this package flows through a generator obtained here.  A
stream is addressed by a purpose label plus integer indices; derivation uses
``SeedSequence`` spawn keys, so streams are statistically independent, stable
across runs, and insensitive to the order in which they are created.  That
last property is what makes parallel collection reproducible: worker layout
can change without changing which stream trajectory ``(length, index)`` sees.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError

PURPOSES = ("collect", "init", "eval", "iter", "repeat")


def _sequence(seed: int, purpose: str, indices) -> np.random.SeedSequence:
    try:
        code = PURPOSES.index(purpose)
    except ValueError:
        raise DomainError(
            f"unknown stream purpose {purpose!r}; choose from {PURPOSES}"
        ) from None
    return np.random.SeedSequence(entropy=seed, spawn_key=(code, *indices))


def stream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Generator for ``(purpose, *indices)`` derived from ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, purpose, indices)))


def child_seed(seed: int, purpose: str, *indices: int) -> int:
    """An integer sub-seed for ``(purpose, *indices)``, usable as a new master."""
    return int(_sequence(seed, purpose, indices).generate_state(1, np.uint64)[0])
