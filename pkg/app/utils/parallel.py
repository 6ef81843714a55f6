"""
Seeded block decomposition for Monte Carlo work.

Samples are cut into fixed-size blocks. Every block draws from its own
counter-based generator keyed by (seed, stream, block), so the values a block
produces do not depend on which worker ran it or how many workers exist.
Blocks are returned in block order and reduced afterwards.
"""

import logging
import os
from multiprocessing import Pool
from typing import Callable, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Stream identifiers. Keep values stable: they are part of the seed key.
STREAM_H = 0
STREAM_Q = 1
STREAM_PHI = 2
STREAM_GRID = 3
STREAM_CHECK = 4
STREAM_RETRY = 5

DEFAULT_BLOCK_SIZE = 4096


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the given experiment seed and integer key path"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def resolve_workers(workers: int) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def block_plan(num_samples: int, block_size: int = DEFAULT_BLOCK_SIZE) -> List[Tuple[int, int]]:
    """Return (block_index, block_length) pairs covering num_samples"""
    if num_samples <= 0:
        return []
    block_size = max(1, int(block_size))
    plan = []
    start = 0
    index = 0
    while start < num_samples:
        length = min(block_size, num_samples - start)
        plan.append((index, length))
        start += length
        index += 1
    return plan


def run_blocks(func: Callable, tasks: Sequence, workers: int = 1) -> list:
    """
    Map func over tasks, preserving task order.
    Uses a process pool when more than one worker is requested.
    """
    workers = resolve_workers(workers)
    tasks = list(tasks)
    if workers == 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(func, tasks)


def run_sampler(func: Callable, payload, num_samples: int, seed: int, stream: int,
                workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """
    Run a block sampler and concatenate its per-sample outputs.

    func receives (payload, seed, stream, block_index, block_length) and returns
    a 1-D array of block_length values.
    """
    tasks = [(payload, seed, stream, index, length)
             for index, length in block_plan(num_samples, block_size)]
    chunks = run_blocks(func, tasks, workers)
    if not chunks:
        return np.zeros(0, dtype=complex)
    return np.concatenate(chunks)
