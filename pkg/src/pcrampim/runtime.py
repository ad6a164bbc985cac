"""End-to-end inference: through the engine, directly on bitstreams, and exactly.

All three executors share one arithmetic contract.  Weights and activations
are 8-bit magnitudes read as ``value / 256``.  For a neuron with fan-in ``n``
and ``k = ceil(log2 n)``:

* stochastic: ``relu8((pop(pos) - pop(neg)) << k)``, where ``pos`` / ``neg``
  are the MUX-tree sums of the products with positive / negative weights
  (popcounts saturate at 255);
* reference: ``relu8(((sum w * a) >> (8 + k)) << k)`` in exact integers.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .activation import relu8
from .compiler.lowering import lower
from .compiler.shapes import resolve_shapes
from .config import SimConfig
from .engine import PimcEngine
from .errors import ValidationError
from .layout import CHUNK, DEFAULT_LAYOUT
from .stochastic import build_lut, select_arrays, select_schedule, tree_depth, accumulate_words
from .tensorio import SignedTensor


@dataclass
class RunResult:
    output: np.ndarray
    ledger: object
    lowered: object
    engine: PimcEngine

    @property
    def diagnostics(self) -> dict:
        return dict(sorted(self.engine.diagnostics.items()))


def _input_array(net, x):
    if isinstance(x, SignedTensor):
        if x.negative[x.magnitude > 0].any():
            raise ValidationError("input activations must be non-negative")
        x = x.magnitude
    arr = np.asarray(x, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValidationError("input activations must lie in 0..255")
    if arr.size != int(np.prod(net.input_shape)):
        raise ValidationError(f"input has {arr.size} values, network expects {tuple(net.input_shape)}")
    return arr.reshape(net.input_shape)


def run_stochastic(net, x, config: SimConfig = None, engine: PimcEngine = None, workers: int = 1,
                   account: bool = True) -> RunResult:
    """Lower, preload, schedule and execute; returns the output and the ledger."""
    if engine is None:
        engine = PimcEngine(config or SimConfig())
    cfg = engine.config
    low = lower(net, cfg, engine.layout)
    low.preload(engine, _input_array(net, x).astype(np.uint8))
    ledger = engine.schedule(low.stream, execute=True, account=account, workers=workers)
    out = low.read_output(engine).astype(np.int64)
    return RunResult(out, ledger, low, engine)


# -- layer helpers shared by the direct and reference executors ----------------

def _patches(values, stage):
    """im2col over values: rows are output positions, columns ``(ky, kx, ci)``."""
    h, w, c = stage.in_shape
    oh, ow, _ = stage.out_shape
    k, pad = stage.kernel, stage.padding
    padded = np.zeros((h + 2 * pad, w + 2 * pad, c), dtype=np.int64)
    padded[pad:pad + h, pad:pad + w] = values.reshape(h, w, c)
    cols = np.empty((oh * ow, k * k * c), dtype=np.int64)
    for oy in range(oh):
        for ox in range(ow):
            cols[oy * ow + ox] = padded[oy:oy + k, ox:ox + k, :].reshape(-1)
    return cols


def _pool(values, stage):
    h, w, c = stage.in_shape
    oh, ow, _ = stage.out_shape
    win = stage.window
    v = values.reshape(h, w, c)[:oh * win, :ow * win]
    return v.reshape(oh, win, ow, win, c).max(axis=(1, 3))


def _flatten(values, stage):
    flat = values.reshape(-1)
    if stage.pad_to > flat.size:
        flat = np.concatenate([flat, np.zeros(stage.pad_to - flat.size, dtype=np.int64)])
    return flat


def _mac_inputs(values, stage):
    """(positions, fan_in) activations and the channel-major output layout."""
    if stage.kind == "fc":
        return values.reshape(1, -1)
    return _patches(values, stage)


def _apply(net, x, cfg, mac):
    stages = resolve_shapes(net, cfg.conv_padding, cfg.pool_window)
    cur = _input_array(net, x)
    for st in stages:
        if st.kind == "flatten":
            cur = _flatten(cur, st)
        elif st.kind == "pool":
            cur = _pool(cur, st)
        else:
            wt = net.weights[st.weight_name]
            rows = wt.shape[0]
            w = wt.values().reshape(rows, -1)
            inputs = _mac_inputs(cur, st)
            out = mac(inputs, w, wt, st)      # (positions, rows)
            cur = out.reshape(st.out_shape)
    return cur


def run_reference(net, x, config: SimConfig = None) -> np.ndarray:
    """Exact fixed-point evaluation."""
    cfg = config or SimConfig()

    def mac(inputs, w, wt, st):
        k = tree_depth(st.fan_in)
        acc = inputs @ w.T
        q = (acc >> (8 + k)) << k
        return np.clip(q, 0, 255)

    return _apply(net, x, cfg, mac).astype(np.int64)


def run_direct(net, x, config: SimConfig = None) -> np.ndarray:
    """Bitstream evaluation without the controller: encode, AND, MUX-reduce, convert.

    Operand rotations follow the compute-partition row an operand would
    occupy, so the result is bit-identical to :func:`run_stochastic`.
    """
    cfg = config or SimConfig()
    lut = build_lut(cfg.lut_seed)
    lay = DEFAULT_LAYOUT
    sel = select_arrays(select_schedule(lut, lay.select_levels, cfg.select_offset))
    stride, offset = cfg.rotation_stride, cfg.select_offset
    act_rot = np.array([lay.rotation(lay.act_row(t), stride, offset) for t in range(CHUNK)])
    wgt_rot = np.array([lay.rotation(lay.weight_row(t), stride, offset) for t in range(CHUNK)])
    zero = np.zeros(4, dtype=np.uint64)

    def mac(inputs, w, wt, st):
        n = st.fan_in
        k = tree_depth(n)
        t = np.arange(n) % CHUNK
        mag = wt.magnitude.reshape(w.shape[0], -1).astype(np.int64)
        neg = (wt.negative & (wt.magnitude > 0)).reshape(w.shape[0], -1)
        wst = [kernels.encode_rows(lut.rows, mag[r], wgt_rot[t]) for r in range(w.shape[0])]
        out = np.zeros((inputs.shape[0], w.shape[0]), dtype=np.int64)
        for p in range(inputs.shape[0]):
            ast = kernels.encode_rows(lut.rows, inputs[p], act_rot[t])
            for r in range(w.shape[0]):
                prod = ast & wst[r]
                pops = []
                for mask in (~neg[r], neg[r]):
                    if not mask.any():
                        pops.append(0)
                        continue
                    leaves = np.where(mask[:, None], prod, zero)
                    root, _ = accumulate_words(leaves, sel, cfg.accumulation_mode)
                    pops.append(min(int(kernels.popcount_rows(root)[0]), 255))
                v = pops[0] - pops[1]
                out[p, r] = relu8(v << k if v > 0 else v)
        return out

    return _apply(net, x, cfg, mac).astype(np.int64)


def compare(a, b) -> dict:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValidationError(f"cannot compare shapes {a.shape} and {b.shape}")
    if a.size == 0:
        return {"max_abs_diff": 0, "mean_abs_diff": 0.0, "top1_agreement": 1.0, "size": 0}
    d = np.abs(a - b)
    return {
        "max_abs_diff": int(d.max()),
        "mean_abs_diff": float(d.mean()),
        "top1_agreement": float(int(np.argmax(a.reshape(-1))) == int(np.argmax(b.reshape(-1)))),
        "size": int(a.size),
    }
