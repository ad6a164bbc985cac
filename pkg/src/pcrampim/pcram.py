"""Functional and timing model of the PCRAM hierarchy.

Storage is sparse: a row is materialised as 128 little-endian uint64 words
(8192 bits) the first time it is written.  Every access returns a
:class:`Cost`; nothing is charged behind the caller's back.
"""

from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .errors import AddressError, ConstraintError

WORD = np.dtype("<u8")
BLOCK_WORDS = 4


@dataclass(frozen=True)
class PcramGeometry:
    channels: int = 2
    ranks_per_channel: int = 8
    banks_per_rank: int = 16
    partitions_per_bank: int = 16
    rows_per_partition: int = 4096
    bits_per_row: int = 8192
    block_bits: int = 256

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"geometry field {f.name} must be positive")
        if self.block_bits != 256:
            raise ValueError("only 256-bit blocks are modelled")
        if self.bits_per_row % self.block_bits:
            raise ValueError("bits_per_row must be a multiple of block_bits")

    @property
    def blocks_per_row(self) -> int:
        return self.bits_per_row // self.block_bits

    @property
    def words_per_row(self) -> int:
        return self.bits_per_row // 64

    @property
    def num_banks(self) -> int:
        return self.channels * self.ranks_per_channel * self.banks_per_rank

    @property
    def bank_bits(self) -> int:
        return self.partitions_per_bank * self.rows_per_partition * self.bits_per_row

    @property
    def capacity_bits(self) -> int:
        return self.num_banks * self.bank_bits

    @property
    def capacity_bytes(self) -> int:
        return self.capacity_bits // 8

    @property
    def blocks_per_bank(self) -> int:
        return self.partitions_per_bank * self.rows_per_partition * self.blocks_per_row


class BlockAddress(NamedTuple):
    channel: int
    rank: int
    bank: int
    partition: int
    row: int
    block_index: int


class Cost(NamedTuple):
    latency_ns: float
    energy_pj: float


@dataclass(frozen=True)
class TimingParams:
    # Solved from the five command totals: t_read + t_write = 108 ns,
    # 33 t_read + 32 t_write = 3504 ns -> 48 / 60.
    t_read: float = 48.0
    t_write: float = 60.0


# Add-on circuit energy (pJ) and delay (ns) at 14 nm.
TABLE3_ADDONS = {
    "SRAM-LUT": (0.297, 0.316),
    "16:8 Mux": (4.662, 0.007),
    "256:8 Mux": (4.72, 0.0077),
    "256:32 Mux": (18.6, 0.0303),
    "8:32 Demux": (18.64, 0.0305),
    "8:256 Demux": (149.19, 0.242),
    "256:1024 Demux": (902.8, 1.465),
    "ReLU Logic": (185.0, 4.3),
    "Pooling Logic": (2140.0, 39.3),
}

# Area (mm^2), echoed for reports only.
TABLE3_AREA = {
    "SRAM-LUT": 0.402,
    "16:8 Mux": 0.159,
    "256:8 Mux": 0.639,
    "256:32 Mux": 0.688,
    "8:32 Demux": 0.158,
    "8:256 Demux": 0.493,
    "256:1024 Demux": 1.266,
    "ReLU Logic": 0.02,
    "Pooling Logic": 3.06,
}


@dataclass(frozen=True)
class EnergyParams:
    # Placeholder per-block access energies; calibration inputs, not measured.
    e_read: float = 25.6
    e_write: float = 1536.0
    addon: dict = field(default_factory=lambda: dict(TABLE3_ADDONS))


class BankState:
    """Mutable storage of one bank plus its compute-partition designation."""

    def __init__(self, geometry: PcramGeometry, compute_partition: int = None,
                 accumulator_row: int = 0):
        self.geometry = geometry
        if compute_partition is None:
            compute_partition = geometry.partitions_per_bank - 1
        if not 0 <= compute_partition < geometry.partitions_per_bank:
            raise ValueError("compute partition outside bank")
        if not 0 <= accumulator_row < geometry.rows_per_partition:
            raise ValueError("accumulator row outside compute partition")
        self.compute_partition_index = compute_partition
        self.accumulator_row_index = accumulator_row
        self._rows = {}

    def _row(self, partition, row, create=False):
        key = (partition, row)
        data = self._rows.get(key)
        if data is None and create:
            data = np.zeros(self.geometry.words_per_row, dtype=WORD)
            self._rows[key] = data
        return data

    def read(self, partition, row, block):
        data = self._row(partition, row)
        if data is None:
            return np.zeros(BLOCK_WORDS, dtype=WORD)
        return data[BLOCK_WORDS * block:BLOCK_WORDS * (block + 1)].copy()

    def write(self, partition, row, block, words):
        data = self._row(partition, row, create=True)
        data[BLOCK_WORDS * block:BLOCK_WORDS * (block + 1)] = words

    def row_words(self, partition, row):
        data = self._row(partition, row)
        if data is None:
            return np.zeros(self.geometry.words_per_row, dtype=WORD)
        return data.copy()

    @property
    def touched_rows(self):
        return sorted(self._rows)

    def dump_image(self, fh, partitions=None):
        """Write raw bank contents: partition-major, row-major, 64-bit LE words."""
        g = self.geometry
        parts = range(g.partitions_per_bank) if partitions is None else partitions
        zero = np.zeros(g.words_per_row, dtype=WORD).tobytes()
        for p in parts:
            for r in range(g.rows_per_partition):
                data = self._rows.get((p, r))
                fh.write(zero if data is None else data.tobytes())


def _as_words(data):
    arr = np.asarray(data)
    if arr.dtype == np.uint8:
        arr = arr.reshape(32).view(WORD)
    arr = np.asarray(arr, dtype=WORD).reshape(BLOCK_WORDS)
    return arr


class PcramMemory:
    """The whole PCRAM address space, with per-block access costs."""

    def __init__(self, geometry: PcramGeometry = None, timing: TimingParams = None,
                 energy: EnergyParams = None, compute_partition: int = None):
        self.geometry = geometry or PcramGeometry()
        self.timing = timing or TimingParams()
        self.energy = energy or EnergyParams()
        self._compute_partition = compute_partition
        self.banks = {}

    @property
    def read_cost(self) -> Cost:
        return Cost(self.timing.t_read, self.energy.e_read)

    @property
    def write_cost(self) -> Cost:
        return Cost(self.timing.t_write, self.energy.e_write)

    # -- addressing ---------------------------------------------------------

    def validate(self, addr: BlockAddress):
        g = self.geometry
        bounds = (g.channels, g.ranks_per_channel, g.banks_per_rank,
                  g.partitions_per_bank, g.rows_per_partition, g.blocks_per_row)
        for name, value, bound in zip(BlockAddress._fields, addr, bounds):
            if not 0 <= value < bound:
                raise AddressError(f"{name}={value} outside 0..{bound - 1} in {tuple(addr)}")

    def bank_id(self, addr: BlockAddress) -> int:
        g = self.geometry
        return (addr.channel * g.ranks_per_channel + addr.rank) * g.banks_per_rank + addr.bank

    def bank_coords(self, bank_id: int):
        g = self.geometry
        if not 0 <= bank_id < g.num_banks:
            raise AddressError(f"bank id {bank_id} outside 0..{g.num_banks - 1}")
        rank_all, bank = divmod(bank_id, g.banks_per_rank)
        channel, rank = divmod(rank_all, g.ranks_per_channel)
        return channel, rank, bank

    def address(self, bank_id, partition, row, block) -> BlockAddress:
        return BlockAddress(*self.bank_coords(bank_id), partition, row, block)

    def linear_block(self, addr: BlockAddress) -> int:
        g = self.geometry
        self.validate(addr)
        return ((self.bank_id(addr) * g.partitions_per_bank + addr.partition)
                * g.rows_per_partition + addr.row) * g.blocks_per_row + addr.block_index

    def from_linear_block(self, lin: int) -> BlockAddress:
        g = self.geometry
        rest, block = divmod(lin, g.blocks_per_row)
        rest, row = divmod(rest, g.rows_per_partition)
        bank_id, part = divmod(rest, g.partitions_per_bank)
        return self.address(bank_id, part, row, block)

    def bank(self, bank_id: int) -> BankState:
        state = self.banks.get(bank_id)
        if state is None:
            self.bank_coords(bank_id)
            state = BankState(self.geometry, self._compute_partition)
            self.banks[bank_id] = state
        return state

    def _bank_of(self, addr: BlockAddress) -> BankState:
        self.validate(addr)
        return self.bank(self.bank_id(addr))

    # -- accesses -----------------------------------------------------------

    def read_block(self, addr: BlockAddress):
        data = self._bank_of(addr).read(addr.partition, addr.row, addr.block_index)
        return data, self.read_cost

    def write_block(self, addr: BlockAddress, data) -> Cost:
        self._bank_of(addr).write(addr.partition, addr.row, addr.block_index, _as_words(data))
        return self.write_cost

    def peek(self, addr: BlockAddress):
        """Cost-free read for inspection and reporting."""
        return self._bank_of(addr).read(addr.partition, addr.row, addr.block_index)

    def poke(self, addr: BlockAddress, data):
        """Cost-free write, used for the instantaneous DMA preload."""
        self._bank_of(addr).write(addr.partition, addr.row, addr.block_index, _as_words(data))

    def _check_pair(self, a: BlockAddress, b: BlockAddress):
        self.validate(a)
        self.validate(b)
        if a[:4] != b[:4]:
            raise ConstraintError(f"bulk operands must share bank and partition: {tuple(a)} vs {tuple(b)}")
        if a.block_index != b.block_index:
            raise ConstraintError("bulk operands must be column-aligned (same block index)")
        if a.row == b.row:
            raise ConstraintError("bulk operands must be in different rows")

    def bulk_logic_read(self, addr_a: BlockAddress, addr_b: BlockAddress, op: str):
        """Simultaneous two-row activation; one sensing event."""
        self._check_pair(addr_a, addr_b)
        bank = self._bank_of(addr_a)
        a = bank.read(addr_a.partition, addr_a.row, addr_a.block_index)
        b = bank.read(addr_b.partition, addr_b.row, addr_b.block_index)
        op = op.upper()
        if op == "AND":
            out = a & b
        elif op == "OR":
            out = a | b
        else:
            raise ValueError(f"unsupported bulk op {op!r}")
        return out, self.read_cost

    def bulk_not_read(self, addr: BlockAddress):
        data = self._bank_of(addr).read(addr.partition, addr.row, addr.block_index)
        return ~data, self.read_cost
