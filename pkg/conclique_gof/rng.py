"""
Seeded random streams for reproducible simulation.

Every stochastic routine takes a ``numpy.random.Generator``. Independent
streams are derived from a base seed with ``SeedSequence`` spawn keys:
stream ``(stage, index)`` of seed ``b`` is ``SeedSequence(b, spawn_key=(stage, index))``.
Work split into chunks draws from the stream of its chunk index, so results
never depend on how many threads processed the chunks.
"""
from typing import List, Optional, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

# Stage keys for the streams derived from one base seed.
STAGE_OBSERVED = 0
STAGE_CHAIN = 1
STAGE_REPLICATE = 2
STAGE_NULL = 3
STAGE_A_FIELD = 4
STAGE_COVARIANCE = 5
STAGE_STUDY = 6


def make_rng(seed: Optional[SeedLike]) -> np.random.Generator:
    """Build a generator from an integer seed or a SeedSequence."""
    if seed is None:
        raise ValueError("a seed is required for every stochastic computation")
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(int(seed))


def stream(seed: int, stage: int, index: int = 0) -> np.random.Generator:
    """Generator for stream ``index`` of ``stage`` derived from ``seed``."""
    return make_rng(np.random.SeedSequence(int(seed), spawn_key=(stage, index)))


def chunk_bounds(total: int, chunk_size: int) -> List[range]:
    """Split ``range(total)`` into consecutive chunks of at most ``chunk_size``."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def derive_seed(seed: int, *keys: int) -> int:
    """An integer seed for the sub-run identified by ``keys``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])
