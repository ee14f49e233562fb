"""Counter-based random streams.

Every consumer draws from ``stream_rng(seed, stream)`` with its own stream id,
so results never depend on the order in which independent pieces run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_rng", "STREAM"]

# stream ids reserved per consumer; coefficient generators use ids < 2**16
STREAM = {
    "accretivity": 1 << 20,
    "resolvent": 2 << 20,
    "sqrt": 3 << 20,
    "kato": 4 << 20,
    "lp": 5 << 20,
    "kee": 6 << 20,
    "offdiag": 7 << 20,
    "carleson": 8 << 20,
}


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) + (int(stream) << 64)))
