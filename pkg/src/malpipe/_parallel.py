import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "MALPIPE_THREADS"


def n_threads() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def thread_map(fn, items):
    """Ordered map over ``items``; parallel when more than one thread is allowed."""
    items = list(items)
    workers = min(n_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
