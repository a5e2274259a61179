"""
Deterministic random substreams and an order-preserving parallel map for
bootstrap and Monte Carlo replicates.

A substream is identified by the master seed, a stream name and integer
keys (typically the replicate index). Its generator depends on nothing else,
so serial and parallel runs produce identical draws.
"""
import zlib
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from typing import Callable, List, Sequence, TypeVar

import numpy as np

T = TypeVar('T')

MAX_WORKERS = 32


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name"""
    return zlib.crc32(name.encode('utf-8'))


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """
    Generator for the named substream ``name`` at ``keys`` under ``seed``.

    The underlying SeedSequence has entropy ``seed`` and spawn key
    ``(crc32(name), *keys)``.

    :param seed: Master seed (non-negative, up to 64 bits)
    :param name: Stream name, e.g. 'bootstrap' or 'experiment'
    :param keys: Integer keys such as the replicate index
    """
    if seed is None:
        raise ValueError("A seed is required for stochastic computations")
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=(stream_key(name),) + tuple(int(k) for k in keys))
    return np.random.default_rng(seq)


def derive_seed(seed: int, name: str, *keys: int) -> int:
    """Derive a 64-bit child seed from a named substream"""
    rng = substream(seed, name, *keys)
    return int(rng.integers(0, 2 ** 63 - 1, dtype=np.int64))


def run_replicates(fn: Callable[[int], T], count: int, workers: int = 1, processes: bool = False) -> List[T]:
    """
    Evaluate ``fn(index)`` for index in 0..count-1 and return results in index order.

    :param fn: Replicate function; must draw randomness only from its own substream
    :param count: Number of replicates
    :param workers: Number of threads or processes (1 runs serially)
    :param processes: Use a process pool; fn must then be picklable (a module level
        function or a functools.partial of one)
    """
    if workers is None or workers <= 1 or count <= 1:
        return [fn(index) for index in range(count)]

    max_workers = min(workers, count, MAX_WORKERS)
    if processes:
        chunksize = max(1, count // (4 * max_workers))
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(fn, range(count), chunksize=chunksize))

    results: List[T] = [None] * count
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(fn, index): index for index in range(count)}
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return results


def order_statistic(values: Sequence[float], rank: int) -> float:
    """The ``rank``-th smallest value (1-based)"""
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(ordered[rank - 1])
