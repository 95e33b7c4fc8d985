"""Counter-based random streams.

Paths are grouped in fixed-size chunks. Chunk ``c`` owns a Philox key
derived from ``(seed, c)``; the normals for simulation step ``k`` live at
counter ``[0, k, stream, 0]``. Every step draws a full chunk worth of
variates, so the randomness seen by path ``i`` depends only on
``(seed, chunk_size, i)`` and never on how many paths were requested or
how many workers ran.
"""
from __future__ import annotations

import numpy as np

# Named sub-streams, kept distinct from the per-step streams below 2**32.
STREAM_STEP = 0
STREAM_SUBSTEP = 1
STREAM_JUMP_TIMES = 2
STREAM_JUMP_SIZES = 3
STREAM_AUX = 4

_TAG_BOOTSTRAP = 0xB0075
_TAG_EXPTIME = 0xE7A1
_TAG_REFERENCE = 0x5EF0


def chunk_key(seed: int, chunk: int, tag: int = 0) -> np.ndarray:
    """128-bit Philox key for one chunk of paths."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(chunk), int(tag)])
    return ss.generate_state(2, dtype=np.uint64)


def step_generator(key: np.ndarray, step: int, stream: int = STREAM_STEP) -> np.random.Generator:
    """Generator positioned at the counter block of ``(step, stream)``."""
    counter = np.array([0, step, stream, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derived_generator(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Independent stream for auxiliary randomness (bootstrap, exponential clocks)."""
    return np.random.Generator(np.random.Philox(key=chunk_key(seed, index, tag)))


def bootstrap_generator(seed: int) -> np.random.Generator:
    return derived_generator(seed, _TAG_BOOTSTRAP)


def exptime_generator(seed: int, index: int) -> np.random.Generator:
    return derived_generator(seed, _TAG_EXPTIME, index)


def reference_generator(seed: int, index: int = 0) -> np.random.Generator:
    return derived_generator(seed, _TAG_REFERENCE, index)
