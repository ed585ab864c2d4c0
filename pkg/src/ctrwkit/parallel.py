"""Deterministic RNG streams and block-parallel ensemble execution.

Ensembles are split into fixed-size blocks of paths.  Block ``k`` of stream
``q`` always draws from ``SeedSequence(seed, spawn_key=(q, k))``, so results
depend on ``(seed, stream, block_size)`` and never on the worker count.
"""

from __future__ import annotations

import logging
import pickle
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import HorizonError

log = logging.getLogger(__name__)

DEFAULT_BLOCK = 16384


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def block_sizes(n: int, block_size: int) -> list[int]:
    full, rest = divmod(int(n), int(block_size))
    return [block_size] * full + ([rest] if rest else [])


def _picklable(obj) -> bool:
    try:
        pickle.dumps(obj)
    except Exception:  # noqa: BLE001 - any pickling failure means "run serially"
        return False
    return True


def run_blocks(
    fn: Callable,
    n_paths: int,
    *,
    seed: int,
    stream: int = 0,
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
    args: Sequence = (),
) -> list:
    """Call ``fn(n, rng, *args)`` for every block; results come back in block order."""
    sizes = block_sizes(n_paths, block_size)
    jobs = [(fn, n, seed, stream, k, tuple(args)) for k, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        if _picklable(jobs[0]):
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_run_one, jobs))
        log.warning("model is not picklable; running %d blocks serially", len(jobs))
    return [_run_one(job) for job in jobs]


def _run_one(job):
    fn, n, seed, stream, block, args = job
    return fn(n, block_rng(seed, stream, block), *args)


MAX_DROP_FRACTION = 1e-3


def check_dropped(dropped: int, n_paths: int) -> None:
    """Fail the run when more than 0.1% of paths never reached the horizon."""
    if dropped > MAX_DROP_FRACTION * n_paths:
        raise HorizonError(f"{dropped} of {n_paths} paths exhausted their step budget")
