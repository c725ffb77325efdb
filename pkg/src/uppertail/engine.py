"""Block-structured Monte Carlo.

Trials are grouped into blocks of a size fixed by the problem (never by the
worker count).  Block ``k`` draws from the Philox stream keyed by
``(seed, TRIAL_BLOCK, tag, k)``, so any partition of blocks over workers
yields the same per-trial values, and reductions run over blocks in order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _kernels, rng

WORKERS_ENV = "UPPERTAIL_WORKERS"
CELLS_PER_BLOCK = 2_000_000


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {n}")
    return n


def block_size(rows: int, cols: int, cap: int = 1000) -> int:
    return max(1, min(cap, CELLS_PER_BLOCK // (rows * cols)))


def block_counts(trials: int, size: int) -> list[int]:
    full, rest = divmod(trials, size)
    return [size] * full + ([rest] if rest else [])


def map_blocks(fn, jobs, workers: int | None = None) -> list:
    """``[fn(*job) for job in jobs]``, possibly across processes, in job order."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def lpp_block(seed, tag, block, count, rows, cols, scale, lr_coef, lr_const,
              threshold, want_geo):
    """One block of LPP trials; see :func:`uppertail._kernels.batch_passage`."""
    gen = rng.philox(seed, rng.TRIAL_BLOCK, tag, block)
    E = gen.standard_exponential((count, rows, cols))
    return _kernels.batch_passage(E, scale, lr_coef, lr_const, threshold, want_geo)


def lpp_trials(seed, tag, trials, rows, cols, *, scale=None, lr_coef=None, lr_const=None,
               threshold=np.inf, want_geo=False, workers=None, first_block=0):
    """Run ``trials`` LPP trials; returns concatenated (T, last, logL, dmax)."""
    if scale is None:
        scale = np.ones((rows, cols))
    if lr_coef is None:
        lr_coef = np.zeros((rows, cols))
    if lr_const is None:
        lr_const = np.zeros((rows, cols))
    size = block_size(rows, cols)
    jobs = [(seed, tag, first_block + k, cnt, rows, cols, scale, lr_coef, lr_const,
             float(threshold), bool(want_geo))
            for k, cnt in enumerate(block_counts(trials, size))]
    parts = map_blocks(lpp_block, jobs, workers)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))
