"""Seeded random streams.

Every random draw in the package comes from a Philox (counter-based, 64-bit)
generator keyed by ``(seed, stream, *subkeys)``.  Streams never share state, so
e.g. layer ``l`` of a sampled tensor depends only on ``(seed, EDGES, l)`` and
can be produced in any order or in parallel.
"""

import numpy as np

MEMBERSHIPS = 0
LAYER_LABELS = 1
EDGES = 2
KMEANS = 3
EXPERIMENT = 4


def stream(seed, *keys):
    """Return an independent ``numpy.random.Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *keys):
    """Collapse ``(seed, *keys)`` into a fresh 63-bit integer seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
