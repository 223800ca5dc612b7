"""
Partitioning and ordered worker-pool helpers.

Rollouts and Monte-Carlo trajectories are embarrassingly parallel. Each task
carries its own rng stream, so the result of `map_ordered` is identical for
any number of workers.
"""

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def partition_by_size(data: Sequence[Any], size: int) -> List[Sequence[Any]]:
    """
    Partition a sequence by size.
    When indivisible, the last group contains fewer items than the target size.

    Examples:
        - data: [1,2,3,4,5]
        - size: 2
        - return: [[1,2], [3,4], [5]]
    """
    assert size > 0
    return [data[i : (i + size)] for i in range(0, len(data), size)]


def partition_contiguous(data: Sequence[Any], groups: int) -> List[Sequence[Any]]:
    """
    Partition a sequence into at most `groups` contiguous chunks of near-equal size.
    Contiguity keeps the concatenated results in the original order.

    Examples:
        - data: [1,2,3,4,5]
        - groups: 2
        - return: [[1,2,3], [4,5]]
    """
    assert groups > 0
    size = -(-len(data) // groups) if data else 1
    return partition_by_size(data, size)


def _apply_chunk(fn: Callable[[T], R], chunk: Sequence[T]) -> List[R]:
    return [fn(item) for item in chunk]


def map_ordered(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every task and return results in task order.

    workers <= 1 runs in-process. Otherwise tasks are split into contiguous
    chunks and executed on a spawn-context process pool; fn and tasks must be
    picklable.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]

    chunks = partition_contiguous(list(tasks), workers)
    with ProcessPoolExecutor(max_workers=len(chunks), mp_context=mp.get_context("spawn")) as pool:
        futures = [pool.submit(_apply_chunk, fn, chunk) for chunk in chunks]
        results: List[R] = []
        for future in futures:
            results.extend(future.result())
    return results
