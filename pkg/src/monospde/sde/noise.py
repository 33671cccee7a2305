"""Two-sided, reproducible Wiener increments on a time lattice.

Increments are addressed by ``(path, mode, bin)`` with ``bin`` any integer, bin
``j`` covering ``[j dt, (j + 1) dt)``.  Each value comes from a counter-based
Philox stream whose key encodes ``(seed, path, mode)`` and whose counter encodes
the position, so a value never depends on which window or in which order it
was requested.

* Level-0 increments are drawn in blocks of ``block`` bins.
* Finer increments split a bin by Brownian-bridge refinement.  The bridge
  normals of a bin are drawn in heap order (node 1 splits the bin, nodes
  ``2n`` and ``2n + 1`` split the halves of node ``n``), so refining further
  never changes the coarser sub-increments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

_MODE_BITS = 20
_LEVEL_BLOCK = 0
_LEVEL_BRIDGE = 1


def _zigzag(j: int) -> int:
    return 2 * j if j >= 0 else -2 * j - 1


@dataclass(frozen=True)
class NoiseLattice:
    seed: int
    dt: float
    num_noise: int
    block: int = 1024

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if not self.dt > 0:
            raise ConfigurationError(f"lattice step must be positive, got {self.dt}")
        if self.num_noise < 1:
            raise ConfigurationError("need at least one noise mode")

    def _generator(self, path: int, mode: int, position: int, kind: int) -> np.random.Generator:
        if path < 0 or not 0 <= mode < 2**_MODE_BITS:
            raise ConfigurationError(f"invalid noise address path={path}, mode={mode}")
        key = int(self.seed) | (((int(path) << _MODE_BITS) | int(mode)) << 64)
        counter = (_zigzag(int(position)) << 128) | (kind << 192)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def _block_normals(self, path, mode, b):
        return self._generator(path, mode, b, _LEVEL_BLOCK).standard_normal(self.block)

    def window(self, path_ids, start_bin: int, n_bins: int) -> np.ndarray:
        """Level-0 increments, shape ``(n_bins, P, K_U)``."""
        path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
        out = np.empty((n_bins, len(path_ids), self.num_noise))
        if n_bins <= 0:
            return out
        first, last = start_bin // self.block, (start_bin + n_bins - 1) // self.block
        sd = np.sqrt(self.dt)
        for b in range(first, last + 1):
            lo = max(start_bin, b * self.block)
            hi = min(start_bin + n_bins, (b + 1) * self.block)
            sl = slice(lo - b * self.block, hi - b * self.block)
            for i, path in enumerate(path_ids):
                for k in range(self.num_noise):
                    out[lo - start_bin: hi - start_bin, i, k] = sd * self._block_normals(int(path), k, b)[sl]
        return out

    def increment(self, path: int, mode: int, j: int) -> float:
        return float(self.window([path], j, 1)[0, 0, mode])

    def bridge_normals(self, path_ids, j: int, n_nodes: int) -> np.ndarray:
        """Standard normals for heap nodes ``1..n_nodes`` of bin ``j``, shape ``(n_nodes, P, K_U)``."""
        path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
        out = np.empty((n_nodes, len(path_ids), self.num_noise))
        for i, path in enumerate(path_ids):
            for k in range(self.num_noise):
                out[:, i, k] = self._generator(int(path), k, j, _LEVEL_BRIDGE).standard_normal(n_nodes)
        return out

    def fine_window(self, path_ids, start_bin: int, n_bins: int, level: int) -> np.ndarray:
        """Increments on the grid ``dt / 2**level``, shape ``(n_bins * 2**level, P, K_U)``."""
        base = self.window(path_ids, start_bin, n_bins)
        if level == 0:
            return base
        P = base.shape[1]
        nodes = np.stack(
            [self.bridge_normals(path_ids, j, 2**level - 1) for j in range(start_bin, start_bin + n_bins)]
        )  # (n_bins, nodes, P, K)
        cur = base[:, None]  # (n_bins, 1, P, K)
        for depth in range(level):
            width = 2**depth
            z = nodes[:, width - 1: 2 * width - 1]
            left = cur / 2 + 0.5 * np.sqrt(self.dt / width) * z
            right = cur - left
            cur = np.stack([left, right], axis=2).reshape(n_bins, 2 * width, P, self.num_noise)
        return cur.reshape(n_bins * 2**level, P, self.num_noise)

    def split(self, increment, path_ids, j: int, node: int):
        """Split the sub-increment of heap node ``node`` in bin ``j`` into its two halves."""
        depth = int(node).bit_length() - 1
        z = self.bridge_normals(path_ids, j, node)[node - 1]
        left = increment / 2 + 0.5 * np.sqrt(self.dt / 2**depth) * z
        return left, increment - left


def checksum(*arrays) -> str:
    """Stable digest of the noise values consumed by a run."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()
