"""Deterministic random streams and chunked Monte Carlo execution.

A stream is identified by ``(seed, key...)``; its generator is a pure
function of that identity, so work can be split across any number of
workers and still reproduce bit-for-bit.  Monte Carlo loops are cut into
fixed-size chunks, chunk ``i`` draws from stream ``(seed, tag, i)``, and
results are reassembled in chunk order.
"""

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import UsageError

__all__ = ["stream", "tag_id", "chunk_sizes", "map_chunks", "CHUNK"]

CHUNK = 8192


def tag_id(tag):
    """Stable integer for a string tag (crc32, independent of hash seed)."""
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode())


def stream(seed, *key):
    """``numpy.random.Generator`` for stream ``(seed, *key)``."""
    if seed < 0 or seed >= 2 ** 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed),
                                spawn_key=tuple(tag_id(k) for k in key))
    return np.random.default_rng(ss)


def chunk_sizes(n, chunk=CHUNK):
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn, n_samples, seed, tag, workers=1, chunk=CHUNK):
    """Run ``fn(rng, size)`` over fixed chunks and return results in order.

    ``fn`` must depend only on its arguments; the output then does not
    depend on ``workers``.
    """
    sizes = chunk_sizes(n_samples, chunk)

    def job(i):
        return fn(stream(seed, tag, i), sizes[i])

    if workers is None or workers <= 1 or len(sizes) <= 1:
        return [job(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(sizes))))
