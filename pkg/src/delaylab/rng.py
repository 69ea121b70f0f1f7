"""Named, splittable random streams on top of a counter-based generator.

Every source of randomness in a run is drawn from a Philox4x64 generator
keyed by (master_seed, stream_id). Philox is counter-based, so a stream is
a pure function of its key: runs never depend on draw order across streams,
and any language with a Philox implementation can reproduce them.
"""

from __future__ import annotations

import numpy as np

__all__ = ["STREAM_IDS", "stream", "substream"]

# Stable stream identifiers. Never renumber: recorded runs depend on them.
STREAM_IDS = {
    "dataset": 1,    # synthetic inputs for the MLP landscape
    "teacher": 2,    # teacher-network weights generating MLP targets
    "init": 3,       # trainable-parameter initialization
    "batch": 4,      # minibatch index sampling
    "probes": 5,     # probe-iteration sampling for the spiral sweep
    "oracle": 6,     # randomized self-checks in the verify suite
}

_MASK64 = (1 << 64) - 1


def _philox(key0: int, key1: int) -> np.random.Generator:
    key = np.array([key0 & _MASK64, key1 & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named stream of a run."""
    if name not in STREAM_IDS:
        raise KeyError(f"unknown rng stream {name!r}; known: {sorted(STREAM_IDS)}")
    return _philox(master_seed, STREAM_IDS[name])


def substream(master_seed: int, name: str, index: int) -> np.random.Generator:
    """Split a named stream into numbered children (e.g. one per sweep cell)."""
    if name not in STREAM_IDS:
        raise KeyError(f"unknown rng stream {name!r}; known: {sorted(STREAM_IDS)}")
    if index < 0:
        raise ValueError(f"substream index must be >= 0, got {index}")
    return _philox(master_seed, (index << 32) | STREAM_IDS[name])
