"""Counter-based random numbers addressed by (seed, stream, step, index).

Every draw is a pure function of its coordinates, so any subset of paths can
be regenerated without replaying the others, and results do not depend on
how paths are split across workers. The bits come from Philox4x64-10
(numpy's implementation) with key (seed, stream << 40 | step). Uniforms map
index j to word j; normals are generated in fixed chunks of CHUNK_ROWS rows,
one Philox sub-sequence per chunk.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox

BROWNIAN = 1
DEATH = 2
CHUNK_ROWS = 2048

_U64 = (1 << 64) - 1


def _key(seed: int, stream: int, step: int) -> list[int]:
    if seed < 0 or seed > _U64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if step < 0 or step >= 1 << 40:
        raise ValueError("step index out of range")
    return [int(seed), (stream << 40) | int(step)]


def raw_words(seed: int, stream: int, step: int, first: int, count: int) -> np.ndarray:
    """Words ``first .. first+count-1`` of the (seed, stream, step) sequence."""
    block, offset = divmod(int(first), 4)
    bitgen = Philox(key=_key(seed, stream, step), counter=[block, 0, 0, 0])
    return bitgen.random_raw(count + offset)[offset:]


def uniforms(seed: int, stream: int, step: int, first: int, count: int) -> np.ndarray:
    """Uniform(0, 1) doubles, open at both ends, 53 bits of resolution."""
    words = raw_words(seed, stream, step, first, count)
    return ((words >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


def normal_chunk(seed: int, step: int, chunk: int, dim: int) -> np.ndarray:
    """Standard normals of shape (CHUNK_ROWS, dim) for rows of one chunk.

    Each (seed, step, chunk) gets its own Philox sub-sequence (chunk index in
    the second counter word), consumed by numpy's ziggurat sampler.
    """
    bitgen = Philox(key=_key(seed, BROWNIAN, step), counter=[0, int(chunk), 0, 0])
    return np.random.Generator(bitgen).standard_normal((CHUNK_ROWS, dim))


def normals(seed: int, step: int, first: int, count: int, dim: int) -> np.ndarray:
    """Standard normals of shape (count, dim) for rows ``first .. first+count-1``.

    Row ``j`` is row ``j % CHUNK_ROWS`` of chunk ``j // CHUNK_ROWS``, so it does
    not depend on ``first`` and ``count``.
    """
    if count < 1:
        return np.empty((0, dim))
    lo, hi = first // CHUNK_ROWS, (first + count - 1) // CHUNK_ROWS
    parts = [normal_chunk(seed, step, c, dim) for c in range(lo, hi + 1)]
    z = parts[0] if len(parts) == 1 else np.concatenate(parts)
    start = first - lo * CHUNK_ROWS
    return z[start:start + count]
