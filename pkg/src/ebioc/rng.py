"""Deterministic RNG fan-out.

A single pipeline seed is split into named substreams so that results do
not depend on execution order or worker count: every unit of work (a
chain, a scene, an epoch) derives its own generator from stable labels.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for the substream identified by (seed, *labels).

    Labels may be strings or ints; the mapping is stable across runs,
    platforms and PYTHONHASHSEED.
    """
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_label_to_int(x) for x in labels)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
