"""Bank placement of binary tensors.

Every tensor is a flat vector of byte addresses (``-1`` marks a constant
zero, e.g. padding).  Tensors are cut into 32-byte blocks and block ``j``
lives on PIM bank ``j mod nbanks``, so a layer's 32-neuron output group ``g``
lands on the bank that computes it.  Each bank has a bump allocator over its
data partitions (every partition except the compute partition).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import PlacementError

BYTES_PER_BLOCK = 32


@dataclass(frozen=True, eq=False)
class TensorPlacement:
    shape: Tuple[int, ...]
    addr: np.ndarray          # int64 byte addresses, row-major over ``shape``

    @property
    def size(self) -> int:
        return int(self.addr.size)

    def blocks(self) -> np.ndarray:
        a = self.addr[self.addr >= 0]
        return np.unique(a // BYTES_PER_BLOCK)


class Placement:
    def __init__(self, config):
        g = config.geometry
        self.geometry = g
        self.compute_partition = config.compute_partition
        self.banks = list(config.pim_banks)
        self.data_partitions = [p for p in range(g.partitions_per_bank) if p != config.compute_partition]
        self.blocks_per_partition = g.rows_per_partition * g.blocks_per_row
        self.capacity_blocks = len(self.data_partitions) * self.blocks_per_partition
        self.used = {b: 0 for b in self.banks}

    def bank_of_group(self, g: int) -> int:
        return self.banks[g % len(self.banks)]

    def _linear(self, bank, d):
        """Global block id of the ``d``-th data block of ``bank`` (vectorised)."""
        g = self.geometry
        p_idx, rem = np.divmod(d, self.blocks_per_partition)
        parts = np.asarray(self.data_partitions, dtype=np.int64)[p_idx]
        return (bank * g.partitions_per_bank + parts) * self.blocks_per_partition + rem

    def alloc_blocks(self, bank: int, n: int) -> np.ndarray:
        start = self.used[bank]
        if start + n > self.capacity_blocks:
            raise PlacementError(f"bank {bank} is out of data blocks",
                                 required=(start + n) * BYTES_PER_BLOCK,
                                 available=self.capacity_blocks * BYTES_PER_BLOCK)
        self.used[bank] = start + n
        return self._linear(bank, np.arange(start, start + n, dtype=np.int64))

    def tensor(self, shape) -> TensorPlacement:
        """Block-striped tensor: block ``j`` on bank ``j mod nbanks``."""
        shape = tuple(int(d) for d in shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nblocks = -(-n // BYTES_PER_BLOCK)
        block_ids = np.empty(nblocks, dtype=np.int64)
        nb = len(self.banks)
        for i, bank in enumerate(self.banks[:nblocks]):
            sel = np.arange(i, nblocks, nb)
            block_ids[sel] = self.alloc_blocks(bank, sel.size)
        e = np.arange(n, dtype=np.int64)
        addr = block_ids[e // BYTES_PER_BLOCK] * BYTES_PER_BLOCK + e % BYTES_PER_BLOCK
        return TensorPlacement(shape, addr.reshape(shape) if shape else addr)

    def rows_on_bank(self, nrows: int, width: int, bank_of_row) -> np.ndarray:
        """``nrows`` vectors of ``width`` bytes, row ``r`` on ``bank_of_row(r)``."""
        per_row = -(-width // BYTES_PER_BLOCK)
        out = np.empty((nrows, width), dtype=np.int64)
        lane = np.arange(width, dtype=np.int64)
        for r in range(nrows):
            blocks = self.alloc_blocks(bank_of_row(r), per_row)
            out[r] = blocks[lane // BYTES_PER_BLOCK] * BYTES_PER_BLOCK + lane % BYTES_PER_BLOCK
        return out

    def bytes_used(self) -> int:
        return sum(self.used.values()) * BYTES_PER_BLOCK
