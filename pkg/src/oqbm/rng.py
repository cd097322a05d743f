"""Reproducible random-number plumbing for trajectory ensembles.

Every trajectory owns an independent counter-based stream derived from
``(seed, path_index)``, so path i produces the same draws whether it is
simulated alone, inside an ensemble, or on a different thread count.

Ensembles partition paths into fixed-size blocks. Blocks are always the
same regardless of worker count and per-block results are combined in
block order, which makes ensemble output byte-identical for 1, 4 or 8
threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK = 4096  # paths per block; fixed so the partition never depends on threads


def path_generator(seed: int, index: int) -> np.random.Generator:
    """Stream for one trajectory, split off the master seed by path index."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def block_bounds(n_paths: int) -> list[tuple[int, int]]:
    """[(start, size), ...] covering range(n_paths) in BLOCK-sized pieces."""
    return [(s, min(BLOCK, n_paths - s)) for s in range(0, n_paths, BLOCK)]


def run_blocks(
    n_paths: int,
    worker: Callable[[int, int], object],
    threads: int = 1,
) -> list[object]:
    """Run ``worker(start, size)`` over every block, results in block order.

    The worker must depend only on its arguments (plus read-only state), so
    the thread count cannot influence any result.
    """
    bounds = block_bounds(n_paths)
    if threads <= 1 or len(bounds) <= 1:
        return [worker(s, m) for s, m in bounds]
    with ThreadPoolExecutor(max_workers=min(threads, len(bounds))) as pool:
        futures = [pool.submit(worker, s, m) for s, m in bounds]
        return [f.result() for f in futures]


def block_uniforms(seed: int, start: int, size: int, n: int) -> np.ndarray:
    """(size, n) uniforms; row i is the stream of path start+i."""
    out = np.empty((size, n), dtype=float)
    for i in range(size):
        out[i] = path_generator(seed, start + i).random(n)
    return out


def block_normals(seed: int, start: int, size: int, n: int) -> np.ndarray:
    """(size, n) standard normals; row i is the stream of path start+i."""
    out = np.empty((size, n), dtype=float)
    for i in range(size):
        out[i] = path_generator(seed, start + i).standard_normal(n)
    return out


class ChunkedStreams:
    """Per-path generators that hand out draws in step-chunks.

    Used when an ensemble needs T draws per path but T is large enough that
    materializing the full (paths, T) table would be wasteful. Streams are
    identical to one-shot draws because numpy generators consume their bit
    stream sequentially.
    """

    def __init__(self, seed: int, start: int, size: int):
        self._gens = [path_generator(seed, start + i) for i in range(size)]

    def uniforms(self, n: int) -> np.ndarray:
        return np.stack([g.random(n) for g in self._gens])

    def normals(self, n: int) -> np.ndarray:
        return np.stack([g.standard_normal(n) for g in self._gens])


def combine_sums(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum per-block partial results in fixed (block) order."""
    acc = np.zeros_like(parts[0])
    for p in parts:
        acc = acc + p
    return acc
