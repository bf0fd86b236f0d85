"""Chunked trial execution over a thread pool.

Kernels are ``nogil`` numba functions with the calling convention
``kernel(*args, t0, t1, *outs)`` that write the result of trial ``t`` into
``out[t - t0]``.  Since each trial's stream depends only on its index, the
output does not depend on how trials are split across workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def default_threads() -> int:
    return os.cpu_count() or 1


def split(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_trials(kernel, n_trials: int, args: tuple, outs: tuple, *, first_trial: int = 0, threads: int | None = None):
    threads = threads or default_threads()
    # several chunks per worker keeps the pool balanced when trial costs vary
    chunks = split(n_trials, threads * 4 if threads > 1 else 1)

    def work(bounds):
        a, b = bounds
        kernel(*args, first_trial + a, first_trial + b, *(o[a:b] for o in outs))

    if threads == 1 or len(chunks) == 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    return outs
