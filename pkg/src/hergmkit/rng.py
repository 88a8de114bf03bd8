"""Deterministic seed derivation.

Every stochastic routine takes a master seed; nested work units (cluster
chains, replications, simulation draws) get child generators derived from
(master seed, path), so results are reproducible regardless of execution
order or thread count.  String path elements are hashed with crc32 to keep
derived keys stable across runs and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["child_rng", "child_seed"]


def _key(path) -> tuple[int, ...]:
    out = []
    for p in path:
        if isinstance(p, str):
            out.append(zlib.crc32(p.encode("utf-8")))
        else:
            out.append(int(p))
    return tuple(out)


def child_seed(master: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=_key(path))


def child_rng(master: int, *path) -> np.random.Generator:
    """Generator for the work unit identified by (master, *path)."""
    return np.random.default_rng(child_seed(master, *path))
