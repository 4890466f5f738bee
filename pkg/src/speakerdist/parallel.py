"""Worker-count policy and an order-preserving process map."""
import os
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context

WORKERS_ENV = "SPEAKERDIST_WORKERS"


def worker_count(requested=None):
    """``requested`` if given, else ``$SPEAKERDIST_WORKERS``, else 1."""
    if requested is None:
        requested = os.environ.get(WORKERS_ENV, "1")
    n = int(requested)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return n


def pmap(fn, items, workers=None):
    """``[fn(x) for x in items]``, spread over processes when workers > 1."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    # spawn: the parent may hold torch thread pools that do not survive fork
    with ProcessPoolExecutor(max_workers=n, mp_context=get_context("spawn")) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
