"""Deterministic fan-out of one master seed into named child streams.

Every randomized component of the pipeline draws from its own named
stream, so a stage can be re-run in isolation and the full pipeline is
bit-reproducible for a fixed master seed.
"""
from __future__ import annotations

import zlib

import numpy as np


def child_seed(master_seed: int, name: str) -> int:
    """Stable 64-bit seed for the named child stream."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0])


def child_rng(master_seed: int, name: str) -> np.random.Generator:
    """Generator for the named child stream of a master seed."""
    return np.random.default_rng(child_seed(master_seed, name))
