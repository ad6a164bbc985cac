"""PIM controller: executes the five commands and schedules command streams.

Data and cost are computed separately: :meth:`PimcEngine.execute` mutates the
simulated memory, :meth:`PimcEngine.command_cost` prices a command from its
read/write counts.  :meth:`PimcEngine.schedule` combines both and produces a
:class:`~pcrampim.ledger.CostLedger`.
"""

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .activation import relu8
from .commands import KIND_INDEX, CommandStream, PimcCommand
from .config import SimConfig
from .errors import AddressError, ConfigError, ConstraintError, SchedulingError, ValidationError
from .layout import ComputeLayout
from .ledger import CostLedger
from .pcram import WORD, BlockAddress, PcramMemory
from .stochastic import build_lut, select_schedule

BYTES_PER_BLOCK = 32
FIXED_COUNTS = {
    "B_TO_S": (33, 32),
    "ANN_MUL": (1, 1),
    "S_TO_B": (32, 32),
    "ANN_POOL": (32, 32),
}


def command_counts(kind: str, acc_cost_mode: str = "table1", negative_lanes: int = 0):
    """PCRAM (reads, writes) of one command.

    S_TO_B reads one extra block per lane that also has a negative-weight tree.
    """
    if kind == "ANN_ACC":
        return (3, 1) if acc_cost_mode == "flow3" else (1, 1)
    if kind == "S_TO_B":
        return 32 + negative_lanes, 32
    return FIXED_COUNTS[kind]


class CommandCost(NamedTuple):
    reads: int
    writes: int
    latency_ns: float
    energy_pj: float
    addon_energy_pj: float

    @property
    def total_energy_pj(self):
        return self.energy_pj + self.addon_energy_pj


class PimcEngine:
    def __init__(self, config: SimConfig = None, layout: ComputeLayout = None, lut=None):
        self.config = config or SimConfig()
        self.geometry = self.config.geometry
        self.layout = layout or ComputeLayout()
        if self.layout.rows_required > self.geometry.rows_per_partition:
            raise ConfigError("compute partition has too few rows for the operand layout")
        self.memory = PcramMemory(self.geometry, self.config.timing, self.config.energy,
                                  self.config.compute_partition)
        self.lut = lut if lut is not None else build_lut(self.config.lut_seed)
        self.selects = select_schedule(self.lut, self.layout.select_levels, self.config.select_offset)
        self._sel_words = np.stack([s.s.words for s in self.selects])
        self._selc_words = np.stack([s.s_complement.words for s in self.selects])
        self._preloaded = set()
        self.diagnostics = defaultdict(int)
        self._bpr = self.geometry.blocks_per_row
        self._addon = {k: self.config.addon_energy(k) for k in KIND_INDEX}

    # -- addressing helpers ---------------------------------------------------

    @property
    def compute_partition(self):
        return self.config.compute_partition

    def slot(self, row: int, block_index: int) -> int:
        return row * self._bpr + block_index

    def slot_address(self, bank: int, slot: int) -> BlockAddress:
        row, col = divmod(slot, self._bpr)
        return self.memory.address(bank, self.compute_partition, row, col)

    def _slot_of(self, addr: BlockAddress, bank: int = None) -> (int, int):
        self.memory.validate(addr)
        if addr.partition != self.compute_partition:
            raise ConstraintError(f"{tuple(addr)} is outside the compute partition")
        b = self.memory.bank_id(addr)
        if bank is not None and b != bank:
            raise ConstraintError("operands of one command must share a bank")
        return b, self.slot(addr.row, addr.block_index)

    def block_id(self, addr: BlockAddress) -> int:
        return self.memory.linear_block(addr)

    def byte_address(self, addr: BlockAddress, lane: int) -> int:
        if not 0 <= lane < BYTES_PER_BLOCK:
            raise AddressError(f"lane {lane} outside 0..31")
        return self.memory.linear_block(addr) * BYTES_PER_BLOCK + lane

    def _split_block(self, blk: int):
        g = self.geometry
        rest, col = divmod(blk, self._bpr)
        rest, row = divmod(rest, g.rows_per_partition)
        bank, part = divmod(rest, g.partitions_per_bank)
        if not 0 <= bank < g.num_banks:
            raise AddressError(f"block id {blk} outside the address space")
        return bank, part, row, col

    # -- raw storage ------------------------------------------------------------

    def _bank(self, bank: int):
        state = self.memory.banks.get(bank)
        if state is None:
            state = self.memory.bank(bank)
        return state

    def _load_slot(self, bank, slot):
        row, col = divmod(slot, self._bpr)
        data = self._bank(bank)._rows.get((self.compute_partition, row))
        if data is None:
            return np.zeros(4, dtype=WORD)
        return data[4 * col:4 * col + 4]

    def _store_slot(self, bank, slot, words):
        row, col = divmod(slot, self._bpr)
        self._bank(bank).write(self.compute_partition, row, col, words)

    def _read_block_bytes(self, blk):
        bank, part, row, col = self._split_block(blk)
        state = self.memory.banks.get(bank)
        data = None if state is None else state._rows.get((part, row))
        if data is None:
            return np.zeros(BYTES_PER_BLOCK, dtype=np.uint8)
        return data[4 * col:4 * col + 4].view(np.uint8)

    def _gather_bytes(self, addrs):
        out = np.zeros(len(addrs), dtype=np.int64)
        cache = {}
        for i, a in enumerate(addrs):
            if a < 0:
                continue
            blk, lane = divmod(a, BYTES_PER_BLOCK)
            data = cache.get(blk)
            if data is None:
                data = cache[blk] = self._read_block_bytes(blk)
            out[i] = data[lane]
        return out

    def _write_block_bytes(self, bank, blk, values):
        b, part, row, col = self._split_block(blk)
        if b != bank:
            raise ConstraintError(f"destination block {blk} is not in bank {bank}")
        if part == self.compute_partition:
            raise ConstraintError("binary destination must lie outside the compute partition")
        buf = np.zeros(BYTES_PER_BLOCK, dtype=np.uint8)
        buf[:len(values)] = values
        self._bank(bank).write(part, row, col, buf.view(WORD))

    # -- select streams -----------------------------------------------------------

    def preload_select_streams(self, banks):
        """Write every level's S / S' pair into all block columns (offline, cost-free)."""
        lay = self.layout
        cp = self.compute_partition
        for bank in ([banks] if isinstance(banks, int) else banks):
            self.memory.bank_coords(bank)
            state = self._bank(bank)
            for lvl in range(1, lay.select_levels + 1):
                s = np.tile(self._sel_words[lvl - 1], self._bpr)
                sc = np.tile(self._selc_words[lvl - 1], self._bpr)
                state._row(cp, lay.select_row(lvl), create=True)[:] = s
                state._row(cp, lay.select_complement_row(lvl), create=True)[:] = sc
            self._preloaded.add(bank)

    def has_select_streams(self, bank) -> bool:
        return bank in self._preloaded

    # -- validation -----------------------------------------------------------------

    def _check_slot(self, slot, what):
        if not 0 <= slot < self.geometry.rows_per_partition * self._bpr:
            raise AddressError(f"{what} slot {slot} outside the compute partition")

    def _check_dst_slot(self, bank, slot):
        self._check_slot(slot, "destination")
        row = slot // self._bpr
        if row == self.layout.zero_row:
            raise ConstraintError("the zero row is read-only")
        if bank in self._preloaded and 1 <= row <= 2 * self.layout.select_levels:
            raise ConstraintError(f"row {row} holds select streams")

    def _check_pair(self, a, b, what):
        self._check_slot(a, what)
        self._check_slot(b, what)
        if a % self._bpr != b % self._bpr:
            raise ConstraintError(f"{what} operands must be column-aligned")
        if a == b:
            raise ConstraintError(f"{what} operands must be in different rows")

    # -- command semantics --------------------------------------------------------

    def command_counts(self, cmd: PimcCommand):
        neg = sum(1 for s in cmd.aux if s >= 0) if cmd.kind == "S_TO_B" else 0
        return command_counts(cmd.kind, self.config.acc_cost_mode, neg)

    def command_cost(self, cmd: PimcCommand) -> CommandCost:
        reads, writes = self.command_counts(cmd)
        t, e = self.config.timing, self.config.energy
        return CommandCost(reads, writes, reads * t.t_read + writes * t.t_write,
                           reads * e.e_read + writes * e.e_write, self._addon[cmd.kind])

    def execute(self, cmd: PimcCommand):
        """Apply one command to memory (data only, no cost)."""
        handler = self._handlers[cmd.kind]
        handler(self, cmd)

    def _do_b_to_s(self, cmd):
        if len(cmd.src) != len(cmd.dst) or not 1 <= len(cmd.dst) <= 32:
            raise ValidationError("B_TO_S converts 1..32 operands, one source byte per destination")
        if len(set(cmd.dst)) != len(cmd.dst):
            raise ConstraintError("B_TO_S destination rows collide")
        for s in cmd.dst:
            self._check_dst_slot(cmd.bank, s)
        values = self._gather_bytes(cmd.src)
        rows = np.array(cmd.dst, dtype=np.int64) // self._bpr
        cfg = self.config
        rot = [self.layout.rotation(int(r), cfg.rotation_stride, cfg.select_offset) for r in rows]
        streams = kernels.encode_rows(self.lut.rows, values, rot)
        for s, words in zip(cmd.dst, streams):
            self._store_slot(cmd.bank, s, words)

    def _do_ann_mul(self, cmd):
        a, b = cmd.src
        self._check_pair(a, b, "ANN_MUL")
        (dst,) = cmd.dst
        self._check_dst_slot(cmd.bank, dst)
        out = self._load_slot(cmd.bank, a) & self._load_slot(cmd.bank, b)
        self._store_slot(cmd.bank, dst, out)

    def _do_ann_acc(self, cmd):
        src, acc = cmd.src
        (dst,) = cmd.dst
        lvl = cmd.level
        if cmd.bank not in self._preloaded:
            raise ConfigError(f"bank {cmd.bank} has no S/S' rows; preload select streams first")
        if not 1 <= lvl <= self.layout.select_levels:
            raise ValidationError(f"select level {lvl} outside 1..{self.layout.select_levels}")
        col = src % self._bpr
        self._check_pair(self.slot(self.layout.select_row(lvl), col), src, "ANN_ACC")
        self._check_pair(self.slot(self.layout.select_complement_row(lvl), col), acc, "ANN_ACC")
        self._check_dst_slot(cmd.bank, dst)
        s = self._sel_words[lvl - 1]
        sc = self._selc_words[lvl - 1]
        out = (s & self._load_slot(cmd.bank, src)) | (sc & self._load_slot(cmd.bank, acc))
        self._store_slot(cmd.bank, dst, out)

    def _popcounts(self, bank, slots):
        out = np.zeros(len(slots), dtype=np.int64)
        idx = [i for i, s in enumerate(slots) if s >= 0]
        if idx:
            for i in idx:
                self._check_slot(slots[i], "S_TO_B source")
            words = np.stack([self._load_slot(bank, slots[i]) for i in idx])
            out[idx] = kernels.popcount_rows(words)
        return out

    def _do_s_to_b(self, cmd):
        if len(cmd.src) > 32 or len(cmd.aux) > 32:
            raise ValidationError("S_TO_B packs at most 32 lanes")
        pos = self._popcounts(cmd.bank, cmd.src)
        neg = self._popcounts(cmd.bank, cmd.aux) if cmd.aux else np.zeros(0, dtype=np.int64)
        sat = int((pos >= 256).sum() + (neg >= 256).sum())
        if sat:
            self.diagnostics["popcount_saturations"] += sat
        pos = np.minimum(pos, 255)
        lanes = max(len(pos), len(neg))
        vals = np.zeros(lanes, dtype=np.int64)
        vals[:len(pos)] += pos
        vals[:len(neg)] -= np.minimum(neg, 255)
        k = cmd.scale_exponent
        if k < 0:
            raise ValidationError("scale exponent must be non-negative")
        out = np.empty(lanes, dtype=np.uint8)
        clipped = 0
        for i, v in enumerate(vals.tolist()):
            scaled = v << k if v > 0 else v
            if scaled > 255:
                clipped += 1
            out[i] = relu8(scaled)
        if clipped:
            self.diagnostics["output_clips"] += clipped
        (dst,) = cmd.dst
        self._write_block_bytes(cmd.bank, dst, out)

    def _do_ann_pool(self, cmd):
        arity = cmd.arity
        if arity not in (4, 9):
            raise ValidationError(f"unsupported pooling arity {arity}; expected 4 or 9")
        if len(cmd.src) % arity or len(cmd.src) // arity > 32:
            raise ValidationError("ANN_POOL sources must be whole windows for at most 32 lanes")
        vals = self._gather_bytes(cmd.src).reshape(-1, arity)
        (dst,) = cmd.dst
        self._write_block_bytes(cmd.bank, dst, vals.max(axis=1).astype(np.uint8))

    _handlers = {
        "B_TO_S": _do_b_to_s,
        "ANN_MUL": _do_ann_mul,
        "ANN_ACC": _do_ann_acc,
        "S_TO_B": _do_s_to_b,
        "ANN_POOL": _do_ann_pool,
    }

    # -- address-level API ----------------------------------------------------------

    def _run_one(self, cmd):
        self.execute(cmd)
        return self.command_cost(cmd)

    def exec_b_to_s(self, src, dst: Sequence[BlockAddress]) -> CommandCost:
        """Convert binary operands to streams in the compute partition.

        ``src`` is a block (lane ``j`` feeds ``dst[j]``) or a sequence of byte
        addresses, one per destination (``-1`` for a zero operand).
        """
        dst = list(dst)
        if not dst:
            raise ValidationError("B_TO_S needs at least one destination")
        bank, _ = self._slot_of(dst[0])
        slots = [self._slot_of(d, bank)[1] for d in dst]
        if isinstance(src, BlockAddress):
            blk = self.block_id(src)
            srcs = [blk * BYTES_PER_BLOCK + j for j in range(len(dst))]
        else:
            srcs = [int(a) for a in src]
        return self._run_one(PimcCommand("B_TO_S", bank, tuple(srcs), tuple(slots)))

    def exec_ann_mul(self, row_a: BlockAddress, row_b: BlockAddress, dst: BlockAddress) -> CommandCost:
        bank, a = self._slot_of(row_a)
        _, b = self._slot_of(row_b, bank)
        _, d = self._slot_of(dst, bank)
        return self._run_one(PimcCommand("ANN_MUL", bank, (a, b), (d,)))

    def exec_ann_acc(self, src: BlockAddress, acc: BlockAddress, level: int = 1,
                     dst: BlockAddress = None) -> CommandCost:
        """``dst <- (S_level & src) | (S'_level & acc)``; ``dst`` defaults to ``acc``."""
        bank, s = self._slot_of(src)
        _, a = self._slot_of(acc, bank)
        _, d = self._slot_of(dst if dst is not None else acc, bank)
        return self._run_one(PimcCommand("ANN_ACC", bank, (s, a), (d,), level=level))

    def exec_s_to_b(self, src_rows, dst_block: BlockAddress, scale_exponent: int = 0,
                    neg_rows=None) -> CommandCost:
        src_rows = list(src_rows)
        bank = self.memory.bank_id(dst_block)
        self.memory.validate(dst_block)
        if dst_block.partition == self.compute_partition:
            raise ConstraintError("S_TO_B destination lies inside the compute partition")
        pos = tuple(-1 if r is None else self._slot_of(r, bank)[1] for r in src_rows)
        neg = tuple(-1 if r is None else self._slot_of(r, bank)[1] for r in (neg_rows or ()))
        return self._run_one(PimcCommand("S_TO_B", bank, pos, (self.block_id(dst_block),),
                                         aux=neg, scale_exponent=scale_exponent))

    def exec_ann_pool(self, src_blocks, dst_block: BlockAddress) -> CommandCost:
        """Lane-wise max: output lane ``j`` is the max of lane ``j`` over the sources."""
        src_blocks = list(src_blocks)
        arity = len(src_blocks)
        if arity not in (4, 9):
            raise ValidationError(f"unsupported pooling arity {arity}; expected 4 or 9")
        blks = [self.block_id(b) for b in src_blocks]
        srcs = tuple(blk * BYTES_PER_BLOCK + j for j in range(BYTES_PER_BLOCK) for blk in blks)
        self.memory.validate(dst_block)
        bank = self.memory.bank_id(dst_block)
        return self._run_one(PimcCommand("ANN_POOL", bank, srcs, (self.block_id(dst_block),),
                                         arity=arity))

    # -- scheduling -----------------------------------------------------------------

    def _order(self, seg, base):
        """Topological order of one segment; program order when deps only point back."""
        n = len(seg)
        forward = False
        for i, cmd in enumerate(seg):
            for d in cmd.deps:
                if d < 0:
                    raise SchedulingError(f"command {base + i} depends on invalid id {d}")
                if d >= base + n:
                    raise SchedulingError(
                        f"command {base + i} depends on {d}, which lies beyond its segment")
                if d == base + i:
                    raise SchedulingError(f"command {base + i} depends on itself")
                if d > base + i:
                    forward = True
        if not forward:
            return list(range(n))
        import heapq

        indeg = [0] * n
        children = defaultdict(list)
        for i, cmd in enumerate(seg):
            for d in cmd.deps:
                if d >= base:
                    indeg[i] += 1
                    children[d - base].append(i)
        ready = [i for i in range(n) if indeg[i] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            i = heapq.heappop(ready)
            order.append(i)
            for c in children[i]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(ready, c)
        if len(order) != n:
            raise SchedulingError("dependency cycle in command stream")
        return order

    def _read_blocks(self, cmd):
        if cmd.kind in ("B_TO_S", "ANN_POOL"):
            return {a // BYTES_PER_BLOCK for a in cmd.src if a >= 0}
        return ()

    def _written_blocks(self, cmd):
        if cmd.kind in ("S_TO_B", "ANN_POOL"):
            return cmd.dst
        return ()

    def _parallel_safe(self, seg):
        writers = {}
        for cmd in seg:
            for blk in self._written_blocks(cmd):
                writers[blk] = cmd.bank
        for cmd in seg:
            if cmd.deps:
                return False
            for blk in self._read_blocks(cmd):
                w = writers.get(blk)
                if w is not None and w != cmd.bank:
                    return False
        return True

    def _execute_segment(self, seg, order, workers):
        if workers <= 1 or not self._parallel_safe(seg):
            for i in order:
                self.execute(seg[i])
            return
        buckets = defaultdict(list)
        for i in order:
            buckets[seg[i].bank].append(seg[i])
        for bank in buckets:
            self._bank(bank)
        # per-bank diagnostics so threads never share a counter
        results = {}

        def run(bank):
            local = PimcEngine.__new__(PimcEngine)
            local.__dict__.update(self.__dict__)
            local.diagnostics = defaultdict(int)
            for cmd in buckets[bank]:
                local.execute(cmd)
            return bank, dict(local.diagnostics)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for bank, diag in pool.map(run, sorted(buckets)):
                results[bank] = diag
        for bank in sorted(results):
            for key, v in results[bank].items():
                self.diagnostics[key] += v

    def schedule(self, stream, execute: bool = True, account: bool = True,
                 workers: int = 1) -> CostLedger:
        """Run a stream; per-bank serial, cross-bank parallel.

        A command starts once its bank is free, its explicit ``deps`` have
        finished and every binary block it touches is hazard-free (reads wait
        for the last write; writes wait for the last read and write).
        """
        if not isinstance(stream, CommandStream):
            stream = CommandStream(list(stream))
        ledger = CostLedger()
        bank_free = defaultdict(float)
        finish = []
        last_write = {}
        last_read = {}
        base = 0
        for _, seg in stream.segments():
            seg = seg if isinstance(seg, list) else list(seg)
            order = self._order(seg, base)
            seg_finish = [0.0] * len(seg)
            costs = [None] * len(seg)
            for i in order:
                cmd = seg[i]
                cost = self.command_cost(cmd)
                costs[i] = cost
                start = bank_free[cmd.bank]
                for d in cmd.deps:
                    f = finish[d] if d < base else seg_finish[d - base]
                    if f > start:
                        start = f
                reads = self._read_blocks(cmd)
                writes = self._written_blocks(cmd)
                for blk in reads:
                    f = last_write.get(blk, 0.0)
                    if f > start:
                        start = f
                for blk in writes:
                    f = max(last_write.get(blk, 0.0), last_read.get(blk, 0.0))
                    if f > start:
                        start = f
                end = start + cost.latency_ns
                seg_finish[i] = end
                bank_free[cmd.bank] = end
                for blk in reads:
                    if end > last_read.get(blk, 0.0):
                        last_read[blk] = end
                for blk in writes:
                    last_write[blk] = end
            if execute:
                self._execute_segment(seg, order, workers)
            if account:
                for i, cmd in enumerate(seg):
                    c = costs[i]
                    ledger.record(base + i, cmd.kind, cmd.bank, cmd.layer, c.reads, c.writes,
                                  seg_finish[i] - c.latency_ns, seg_finish[i], c.latency_ns,
                                  c.energy_pj, c.addon_energy_pj)
            finish.extend(seg_finish)
            base += len(seg)
        if not account:
            ledger.makespan_ns = max(finish, default=0.0)
        return ledger
