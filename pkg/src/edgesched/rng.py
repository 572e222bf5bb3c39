"""Deterministic random streams.

Every run owns a single integer seed; all randomness is derived from it
through named streams so that components (network init, exploration noise,
batch sampling, environment jitter) are independently reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "seed_sequence", "child_seed"]


def _to_word(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"seed parts must be non-negative, got {part}")
    return int(part)


def seed_sequence(*parts: int | str) -> np.random.SeedSequence:
    """Build a SeedSequence from a mix of integers and stream names."""
    if not parts:
        raise ValueError("at least one seed part required")
    return np.random.SeedSequence([_to_word(p) for p in parts])


def stream(*parts: int | str) -> np.random.Generator:
    """Derive an independent generator, e.g. stream(seed, "explore")."""
    return np.random.default_rng(seed_sequence(*parts))


def child_seed(*parts: int | str) -> int:
    """Collapse a part list into one integer seed, e.g. per-episode seeds."""
    return int(seed_sequence(*parts).generate_state(1, dtype=np.uint64)[0])
