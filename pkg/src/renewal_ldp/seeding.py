"""Counter-based derivation of independent random streams.

Every stream is addressed by ``(master_seed, *counters)`` and built from
:class:`numpy.random.SeedSequence` with the counters as ``spawn_key``.  The
stream for a given address does not depend on which worker consumes it or
in what order, which is what makes ensembles worker-count invariant.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# stream identifiers, kept distinct so different pipelines never share draws
STREAM_PATH = 1
STREAM_ENSEMBLE = 2
STREAM_TAIL = 3
STREAM_APPROX = 4
STREAM_TIGHTNESS = 5
STREAM_HAWKES = 6
STREAM_BOOTSTRAP = 7

CHUNK_SIZE = 8192


def derive_rng(seed: int, *counters: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *counters)``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng_state) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng_state, np.random.Generator):
        return rng_state
    return derive_rng(int(rng_state))


def default_workers() -> int:
    env = os.environ.get("LDP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def chunk_sizes(n: int, chunk: int = CHUNK_SIZE) -> list[int]:
    """Split ``n`` replications into fixed-size chunks (last one shorter)."""
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_ordered(fn: Callable[..., T], items: Sequence, workers: int | None = None) -> list[T]:
    """Apply ``fn`` to ``items`` on a thread pool; results keep input order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def spawn_seeds(seed: int, n: int, *counters: int) -> Iterable[int]:
    """Integer sub-seeds for callers that need plain ints (e.g. one per path)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(counters))
    return (int(x) for x in ss.generate_state(n, dtype=np.uint64) >> np.uint64(1))
