"""Counter-based random streams.

Every random quantity in a run is addressed by a path of non-negative
integers, e.g. ``(run_seed, sample_index, level, tag)``.  The path is
hashed by :class:`numpy.random.SeedSequence` into the key of a Philox
generator, so a stream depends only on its address and never on the order
in which streams are created.  This is what keeps a sampled ensemble
independent of worker count and scheduling.
"""

from __future__ import annotations

import numpy as np

# stream tags; kept stable because they are part of every sample's address
TAG_UNIFORM = 1
TAG_NOISE = 2
TAG_DECOUPLED = 3
TAG_DIAMETER = 10
TAG_AXIS = 11
TAG_ANGLE = 12

_U64 = (1 << 64) - 1


def stream(run_seed: int, *path: int) -> np.random.Generator:
    """Return the generator addressed by ``(run_seed, *path)``."""
    if not 0 <= run_seed <= _U64:
        raise ValueError(f"run_seed must be an unsigned 64-bit integer, got {run_seed}")
    if any(p < 0 for p in path):
        raise ValueError(f"stream path entries must be non-negative, got {path}")
    seq = np.random.SeedSequence(entropy=int(run_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))
