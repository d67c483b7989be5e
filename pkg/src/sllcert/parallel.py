"""Order-preserving thread pool used for per-input work."""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(default=1):
    """Worker count from ``SLLCERT_THREADS`` (falls back to ``default``)."""
    raw = os.environ.get("SLLCERT_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SLLCERT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"SLLCERT_THREADS must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items, threads=1):
    # results come back in input order regardless of scheduling
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
