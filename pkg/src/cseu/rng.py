"""Counter-based random streams keyed by (seed, module, index).

Every consumer derives its generator from the triple, so the stream used for a
given round block never depends on how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

MODULE_IDS = {
    "measurement": 1,
    "unitary": 2,
    "tasks": 3,
    "experiment": 4,
    "calibration": 5,
    "validate": 6,
}


def stream(seed: int, module: str | int, index: int = 0) -> np.random.Generator:
    mod = MODULE_IDS[module] if isinstance(module, str) else int(module)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(mod, int(index)))
    return np.random.Generator(np.random.Philox(ss))


def substream_seeds(seed: int, count: int, module: str | int = "experiment") -> list[int]:
    """Deterministic child seeds for repeated experiments."""
    g = stream(seed, module, 0)
    return [int(x) for x in g.integers(0, 2**63 - 1, size=count)]
