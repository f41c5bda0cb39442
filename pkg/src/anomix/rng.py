"""Deterministic random-stream management.

One master seed fans out to named substreams ("init", "batching",
"augmentation", "split", ...) so that enabling or disabling one pipeline
stage never shifts the draws consumed by another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the named substream of a master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_key(name),)))


def child_seed(seed: int, name: str) -> int:
    """Stable integer seed derived from a master seed and a stream name."""
    ss = np.random.SeedSequence(seed, spawn_key=(_key(name),))
    return int(ss.generate_state(1, np.uint64)[0])
