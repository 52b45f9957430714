"""
Counter-based random streams.

Every block of ``BLOCK_ROWS`` rows gets its own Philox generator keyed by
``(seed, stream)`` and positioned by the block number, so a block's draws depend
only on where it sits, never on which worker produced it or in what order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import numpy.typing as npt
from typing_extensions import Callable, List, TypeVar

logger = logging.getLogger(__name__)

BLOCK_ROWS = 1024

STREAM_HEIGHTS = 0
STREAM_GAUSSIAN = 1
STREAM_DICTIONARY = 2
STREAM_REFERENCE = 3
STREAM_DENSITY = 4

_Result = TypeVar("_Result")


def check_seed(seed: int) -> int:
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    """
    Generator for one block of one stream.

    :param seed: 64-bit seed, the low word of the Philox key
    :param stream: stream number, the high word of the key
    :param block: block number, placed in the high half of the counter
    :returns: a fresh generator
    """

    key = (int(stream) << 64) | check_seed(seed)
    return np.random.Generator(np.random.Philox(key=key, counter=int(block) << 128))


def map_blocks(
    n: int, work: Callable[[int, int], _Result], threads: int = 1
) -> List[_Result]:
    """
    Apply ``work(block, rows)`` to every block of an ``n``-row job, in block order.

    :param n: total number of rows
    :param work: callable receiving the block number and its row count
    :param threads: worker threads; results never depend on it
    :returns: one result per block
    """

    sizes = [min(BLOCK_ROWS, n - start) for start in range(0, n, BLOCK_ROWS)]
    if threads <= 1 or len(sizes) <= 1:
        return [work(block, rows) for block, rows in enumerate(sizes)]

    logger.debug(f"Running {len(sizes)} blocks on {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(work, range(len(sizes)), sizes))


def standard_normal(seed: int, stream: int, n: int, dim: int, threads: int = 1) -> npt.NDArray[np.float64]:
    """``n`` rows of ``dim`` independent standard normals."""

    def work(block: int, rows: int) -> npt.NDArray[np.float64]:
        return block_generator(seed, stream, block).standard_normal((rows, dim))

    blocks = map_blocks(n, work, threads)
    return np.concatenate(blocks) if blocks else np.empty((0, dim))


def uniform_integers(seed: int, stream: int, n: int, bits: int = 53, threads: int = 1) -> npt.NDArray[np.uint64]:
    """``n`` integers uniform on ``[0, 2**bits)``."""

    def work(block: int, rows: int) -> npt.NDArray[np.uint64]:
        return block_generator(seed, stream, block).integers(0, 2**bits, size=rows, dtype=np.uint64)

    blocks = map_blocks(n, work, threads)
    return np.concatenate(blocks) if blocks else np.empty(0, dtype=np.uint64)


def uniform(seed: int, stream: int, n: int, dim: int = 1, threads: int = 1) -> npt.NDArray[np.float64]:
    """``n`` rows of ``dim`` uniforms on [0, 1)."""

    def work(block: int, rows: int) -> npt.NDArray[np.float64]:
        return block_generator(seed, stream, block).random((rows, dim))

    blocks = map_blocks(n, work, threads)
    return np.concatenate(blocks) if blocks else np.empty((0, dim))
