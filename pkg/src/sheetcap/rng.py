"""Reproducible random streams keyed by ``(master_seed, stream_index)``.

Streams come from the counter-based Philox generator, keyed through
``numpy.random.SeedSequence`` with the stream index as spawn key, so two
different indices give independent streams by construction. Normal
variates are numpy's ``standard_normal`` (ziggurat); outputs are therefore
bit-reproducible for a fixed numpy version.

Batched draws are split into fixed-size chunks, each with its own child
stream. Which numbers land in draw ``i`` depends only on the seed and on
``i``, never on how the work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHUNK_DRAWS = 4096


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be nonnegative")

    def sequence(self, *sub: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, *sub))

    def generator(self, *sub: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.sequence(*sub)))

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "stream_index": self.stream_index}


def as_seedspec(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    if isinstance(seed, (tuple, list)):
        return SeedSpec(int(seed[0]), int(seed[1]))
    return SeedSpec(int(seed))


def iter_normal_chunks(seed: SeedSpec, n_draws: int, width: int, chunk: int = CHUNK_DRAWS):
    """Yield ``(start, z)`` with ``z`` of shape ``(m, width)``; chunk ``k`` uses child stream ``k``."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    for k, start in enumerate(range(0, n_draws, chunk)):
        stop = min(start + chunk, n_draws)
        yield start, seed.generator(k).standard_normal((stop - start, width))


def standard_normals(seed: SeedSpec, n_draws: int, width: int, chunk: int = CHUNK_DRAWS) -> np.ndarray:
    """``(n_draws, width)`` i.i.d. N(0,1) array assembled from :func:`iter_normal_chunks`."""
    out = np.empty((n_draws, width))
    for start, z in iter_normal_chunks(seed, n_draws, width, chunk):
        out[start:start + z.shape[0]] = z
    return out
