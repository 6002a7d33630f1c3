"""Order-preserving sample-parallel map.

Results are collected by sample index, so any reduction downstream sees the
same operand order regardless of thread count; determinism comes from the
counter-addressed RNG, never from scheduling.
"""

from concurrent.futures import ThreadPoolExecutor


def map_samples(fn, n_samples, threads=1):
    """Evaluate fn(i) for i in range(n_samples); returns results in index
    order.  threads > 1 uses a thread pool (compiled kernels release the
    GIL, so this is a real speedup on the hot paths)."""
    if threads is None or threads <= 1:
        return [fn(i) for i in range(n_samples)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_samples)))
