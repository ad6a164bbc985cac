"""Lowering of a bound network to a PIM command stream.

Each conv / fc neuron owns one block column (its lane) of its bank's compute
partition.  Its inputs are processed in chunks of 32: one or more B_TO_S
commands load activations and weights, one ANN_MUL per input overwrites the
weight stream with the product, and a MUX tree of ANN_ACC commands reduces
the products of each weight sign separately.  Chunk roots are combined like
a binary counter through the pending / temp rows, so the overall reduction is
the balanced tree over ``2**k`` leaves, ``k = ceil(log2 fan_in)``.  A final
S_TO_B per 32-neuron group subtracts the two trees' popcounts, rescales by
``2**k`` and applies the 8-bit ReLU.

Convolutions are lowered by enumerating patches (im2col order ``ky, kx, ci``
matching weights of shape ``(Cout, K, K, Cin)``); padding taps read a
constant zero.  Pooling emits one ANN_POOL per 32 output values.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import commands as C
from ..errors import PlacementError, ValidationError
from ..layout import CHUNK, CHUNK_DEPTH, NEG, POS, ComputeLayout
from ..stochastic import tree_depth
from ..tensorio import SignedTensor
from .placement import BYTES_PER_BLOCK, Placement, TensorPlacement
from .shapes import resolve_shapes

GROUP = 32


@dataclass
class LoweredNetwork:
    net: object
    stages: list
    placement: Placement
    input: TensorPlacement
    outputs: list                      # TensorPlacement after each stage
    weight_addr: dict = field(default_factory=dict)
    stream: C.CommandStream = None
    accumulation_mode: str = "tree"

    @property
    def output(self) -> TensorPlacement:
        return self.outputs[-1] if self.outputs else self.input

    @property
    def banks(self):
        return self.placement.banks

    def preload(self, engine, input_tensor):
        """Instantaneous DMA: input activations and weight magnitudes, plus S/S' rows."""
        mag = _activation_bytes(input_tensor, self.input.shape)
        poke_bytes(engine, self.input.addr.reshape(-1), mag.reshape(-1))
        for name, addr in self.weight_addr.items():
            poke_bytes(engine, addr.reshape(-1), self.net.weights[name].magnitude.reshape(-1))
        engine.preload_select_streams(self.banks)

    def read_output(self, engine) -> np.ndarray:
        return peek_bytes(engine, self.output.addr.reshape(-1)).reshape(self.output.shape)


def _activation_bytes(t, shape):
    if isinstance(t, SignedTensor):
        if t.negative[t.magnitude > 0].any():
            raise ValidationError("input activations must be non-negative")
        arr = t.magnitude
    else:
        arr = np.asarray(t)
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValidationError("input activations must lie in 0..255")
        arr = arr.astype(np.uint8)
    if arr.size != int(np.prod(shape)):
        raise ValidationError(f"input has {arr.size} values, network expects shape {tuple(shape)}")
    return arr.reshape(shape)


def poke_bytes(engine, addr, values):
    addr = np.asarray(addr, dtype=np.int64)
    values = np.asarray(values, dtype=np.uint8)
    keep = addr >= 0
    addr, values = addr[keep], values[keep]
    if not addr.size:
        return
    blocks = addr // BYTES_PER_BLOCK
    order = np.argsort(blocks, kind="stable")
    blocks, lanes, values = blocks[order], (addr % BYTES_PER_BLOCK)[order], values[order]
    starts = np.flatnonzero(np.r_[True, blocks[1:] != blocks[:-1]])
    ends = np.r_[starts[1:], blocks.size]
    mem = engine.memory
    for s, e in zip(starts, ends):
        a = mem.from_linear_block(int(blocks[s]))
        buf = mem.peek(a).view(np.uint8).copy()
        buf[lanes[s:e]] = values[s:e]
        mem.poke(a, buf)


def peek_bytes(engine, addr):
    addr = np.asarray(addr, dtype=np.int64)
    out = np.zeros(addr.size, dtype=np.uint8)
    cache = {}
    mem = engine.memory
    for i, a in enumerate(addr.tolist()):
        if a < 0:
            continue
        blk, lane = divmod(a, BYTES_PER_BLOCK)
        data = cache.get(blk)
        if data is None:
            data = cache[blk] = mem.peek(mem.from_linear_block(blk)).view(np.uint8)
        out[i] = data[lane]
    return out


def _patch_addresses(in_addr, stage):
    """(OH*OW, K*K*Cin) byte addresses, ``-1`` for padding taps."""
    h, w, c = stage.in_shape
    oh, ow, _ = stage.out_shape
    k, pad = stage.kernel, stage.padding
    padded = np.full((h + 2 * pad, w + 2 * pad, c), -1, dtype=np.int64)
    padded[pad:pad + h, pad:pad + w] = in_addr.reshape(h, w, c)
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))
    # win: (oh, ow, c, k, k) -> (oh, ow, k, k, c)
    return np.ascontiguousarray(win[:oh, :ow].transpose(0, 1, 3, 4, 2)).reshape(oh * ow, k * k * c)


class _NeuronEmitter:
    """Emits the per-neuron command sequence inside one block column."""

    def __init__(self, layout: ComputeLayout, blocks_per_row: int, mode: str):
        self.layout = layout
        self.bpr = blocks_per_row
        self.mode = mode

    def emit(self, bank, col, in_addr, w_addr, negative, layer, out):
        """Append commands to ``out``; return the (positive, negative) root slots (-1 = none)."""
        lay = self.layout
        bpr = self.bpr
        zero = lay.zero_row * bpr + col
        n = len(in_addr)
        k = tree_depth(n)
        if k > lay.select_levels:
            raise ValidationError(f"fan-in {n} needs {k} select levels, only {lay.select_levels} exist")
        act = [lay.act_row(t) * bpr + col for t in range(CHUNK)]
        wgt = [lay.weight_row(t) * bpr + col for t in range(CHUNK)]
        dst_slots = act + wgt
        nreal = -(-n // CHUNK)
        tree = self.mode == "tree"
        nchunks = (1 << (k - CHUNK_DEPTH)) if tree and k > CHUNK_DEPTH else nreal
        held = ({}, {})
        roots = [-1, -1]
        seq_acc = [None, None]
        append = out.append
        for c in range(nchunks):
            chunk_root = [None, None]
            if c < nreal:
                lo = c * CHUNK
                m = min(CHUNK, n - lo)
                srcs = list(in_addr[lo:lo + m]) + list(w_addr[lo:lo + m])
                dsts = act[:m] + wgt[:m]
                for j in range(0, 2 * m, CHUNK):
                    append(C.PimcCommand("B_TO_S", bank, tuple(srcs[j:j + CHUNK]),
                                         tuple(dsts[j:j + CHUNK]), layer))
                for t in range(m):
                    append(C.PimcCommand("ANN_MUL", bank, (act[t], wgt[t]), (wgt[t],), layer))
                neg = negative[lo:lo + m]
                if not tree:
                    for t in range(m):
                        gt = lo + t
                        for sign in (POS, NEG):
                            x = wgt[t] if bool(neg[t]) == (sign == NEG) else None
                            if gt == 0:
                                seq_acc[sign] = x
                                continue
                            acc = seq_acc[sign]
                            if x is None and acc is None:
                                continue
                            d = lay.accum_row(sign) * bpr + col
                            append(C.PimcCommand(
                                "ANN_ACC", bank, (zero if x is None else x, zero if acc is None else acc),
                                (d,), layer, level=(gt - 1) % lay.select_levels + 1))
                            seq_acc[sign] = d
                    continue
                width = 1 << min(k, CHUNK_DEPTH)
                for sign in (POS, NEG):
                    want = sign == NEG
                    loc = [wgt[t] if t < m and bool(neg[t]) == want else None for t in range(width)]
                    for lvl in range(1, min(k, CHUNK_DEPTH) + 1):
                        nxt = []
                        for q in range(len(loc) >> 1):
                            left, right = loc[2 * q], loc[2 * q + 1]
                            if left is None and right is None:
                                nxt.append(None)
                                continue
                            if lvl == CHUNK_DEPTH and k > CHUNK_DEPTH:
                                row = lay.pending_row(sign, lvl) if c % 2 == 0 else lay.temp_row(sign, lvl)
                                d = row * bpr + col
                            else:
                                d = left if left is not None else right
                            append(C.PimcCommand(
                                "ANN_ACC", bank, (zero if left is None else left,
                                                  zero if right is None else right),
                                (d,), layer, level=lvl))
                            nxt.append(d)
                        loc = nxt
                    chunk_root[sign] = loc[0]
            if not tree:
                continue
            if k <= CHUNK_DEPTH:
                roots = [(-1 if r is None else r) for r in chunk_root]
                continue
            for sign in (POS, NEG):
                lvl, idx, loc = CHUNK_DEPTH, c, chunk_root[sign]
                while lvl < k:
                    if idx % 2 == 0:
                        held[sign][lvl] = loc
                        break
                    left = held[sign].pop(lvl)
                    idx >>= 1
                    lvl += 1
                    if left is None and loc is None:
                        loc = None
                        continue
                    row = lay.pending_row(sign, lvl) if idx % 2 == 0 else lay.temp_row(sign, lvl)
                    d = row * bpr + col
                    append(C.PimcCommand(
                        "ANN_ACC", bank, (zero if left is None else left, zero if loc is None else loc),
                        (d,), layer, level=lvl))
                    loc = d
                if lvl == k:
                    roots[sign] = -1 if loc is None else loc
        if not tree:
            roots = [(-1 if r is None else r) for r in seq_acc]
        return roots[POS], roots[NEG], k


class Lowerer:
    def __init__(self, config, layout: ComputeLayout = None):
        self.config = config
        self.layout = layout or ComputeLayout()
        g = config.geometry
        if g.blocks_per_row < GROUP:
            raise PlacementError(f"rows hold {g.blocks_per_row} blocks; a 32-lane neuron group needs 32")
        if self.layout.rows_required > g.rows_per_partition:
            raise PlacementError("compute partition is too small for the operand layout",
                                 required=self.layout.rows_required * g.bits_per_row // 8,
                                 available=g.rows_per_partition * g.bits_per_row // 8)
        self.emitter = _NeuronEmitter(self.layout, g.blocks_per_row, config.accumulation_mode)

    def lower(self, net) -> LoweredNetwork:
        cfg = self.config
        if net.weights is None and any(l.kind in ("conv", "fc") for l in net.layers):
            raise ValidationError("network weights are not bound")
        stages = resolve_shapes(net, cfg.conv_padding, cfg.pool_window)
        place = Placement(cfg)
        inp = place.tensor(net.input_shape)
        low = LoweredNetwork(net, stages, place, inp, [], accumulation_mode=cfg.accumulation_mode)
        low.stream = C.CommandStream()
        cur = inp
        for stage in stages:
            if stage.kind == "flatten":
                flat = cur.addr.reshape(-1)
                if stage.pad_to > flat.size:
                    flat = np.concatenate([flat, np.full(stage.pad_to - flat.size, -1, dtype=np.int64)])
                cur = TensorPlacement((stage.pad_to,), flat)
            elif stage.kind == "pool":
                out = place.tensor(stage.out_shape)
                low.stream.add_segment(self._pool_segment(stage, cur, out), label=stage.index)
                cur = out
            else:
                out = place.tensor(stage.out_shape)
                wt = net.weights[stage.weight_name]
                rows = wt.shape[0]
                width = stage.fan_in
                if stage.kind == "fc":
                    bank_of = lambda r: place.bank_of_group(r // GROUP)
                else:
                    bank_of = place.bank_of_group
                waddr = place.rows_on_bank(rows, width, bank_of)
                low.weight_addr[stage.weight_name] = waddr
                low.stream.add_segment(self._mac_segment(stage, cur, out, waddr, wt), label=stage.index)
                cur = out
            low.outputs.append(cur)
        return low

    def _pool_segment(self, stage, src, out):
        win = stage.window
        h, w, c = stage.in_shape
        oh, ow, _ = stage.out_shape
        def gen():
            a = src.addr.reshape(h, w, c)[:oh * win, :ow * win]
            # (oh, win, ow, win, c) -> (oh, ow, c, win*win)
            windows = a.reshape(oh, win, ow, win, c).transpose(0, 2, 4, 1, 3).reshape(-1, win * win)
            dst = out.addr.reshape(-1)
            arity = win * win
            for g in range(-(-windows.shape[0] // GROUP)):
                lanes = windows[g * GROUP:(g + 1) * GROUP]
                blk = int(dst[g * GROUP]) // BYTES_PER_BLOCK
                bank = self._bank_of_block(blk)
                yield C.PimcCommand("ANN_POOL", bank, tuple(lanes.reshape(-1).tolist()), (blk,),
                                    stage.index, arity=arity)

        return gen

    def _bank_of_block(self, blk):
        g = self.config.geometry
        return blk // (g.partitions_per_bank * g.rows_per_partition * g.blocks_per_row)

    def _mac_segment(self, stage, src, out, waddr, wt):
        emitter = self.emitter
        n_out = stage.n_out
        layer = stage.index
        if stage.kind == "fc":
            in_rows = src.addr.reshape(1, -1)
            row_of = lambda nid: (0, nid)
        else:
            in_rows = _patch_addresses(src.addr, stage)
            cout = stage.out_shape[2]
            row_of = lambda nid: divmod(nid, cout)
        wneg = (wt.negative & (wt.magnitude > 0)).reshape(wt.shape[0], -1)
        dst = out.addr.reshape(-1)

        def gen():
            for g in range(-(-n_out // GROUP)):
                blk = int(dst[g * GROUP]) // BYTES_PER_BLOCK
                bank = self._bank_of_block(blk)
                lanes = min(GROUP, n_out - g * GROUP)
                pos, neg = [], []
                k = 0
                cmds = []
                for lane in range(lanes):
                    p, r = row_of(g * GROUP + lane)
                    pr, nr, k = emitter.emit(bank, lane, in_rows[p].tolist(), waddr[r].tolist(),
                                             wneg[r], layer, cmds)
                    pos.append(pr)
                    neg.append(nr)
                    yield from cmds
                    cmds.clear()
                aux = tuple(neg) if any(x >= 0 for x in neg) else ()
                yield C.PimcCommand("S_TO_B", bank, tuple(pos), (blk,), layer, aux=aux,
                                    scale_exponent=k)

        return gen


def lower(net, config, layout: ComputeLayout = None) -> LoweredNetwork:
    return Lowerer(config, layout).lower(net)
