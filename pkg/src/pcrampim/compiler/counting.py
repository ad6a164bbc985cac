"""Closed-form command, read/write and memory counts.

The formulas mirror the lowering rules exactly, so for a bound network the
per-kind command counts equal those of the emitted stream.  Unbound networks
are counted as if every weight were positive.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..commands import KINDS
from ..config import SimConfig
from ..layout import CHUNK
from ..stochastic import NBITS, tree_depth
from .shapes import resolve_shapes

GROUP = 32

ASSUMPTIONS = (
    "one inference, batch size 1; no operand reuse across neurons or layers",
    "every product is converted separately: B_TO_S loads each neuron's activations and weights "
    "in chunks of 32 inputs, packed 32 operands per command",
    "one ANN_MUL per weight, one ANN_ACC per non-empty MUX-tree node, one S_TO_B per 32 neurons, "
    "one ANN_POOL per 32 pooled values",
    "positive and negative weights are reduced in separate trees; S_TO_B reads one extra block "
    "per neuron that has a negative tree",
    "unbound weights are counted as all-positive",
    "memory = 8-bit binary weights + 8-bit activations of every layer output (network input in the "
    "first layer) + stochastic working set (2 x min(fan_in, 32) rows of 256 bits per concurrently "
    "active neuron, at most 32 per PIM bank)",
    "pooling layers are reported with the convolution layers; Gb means 1e9 bits",
)


def tree_acc_counts(mask: np.ndarray, k: int) -> np.ndarray:
    """Non-empty internal nodes of a balanced tree over each row of ``mask``."""
    rows, n = mask.shape
    cur = np.zeros((rows, 1 << k), dtype=bool)
    cur[:, :n] = mask
    total = np.zeros(rows, dtype=np.int64)
    for _ in range(k):
        cur = cur.reshape(rows, -1, 2).any(axis=2)
        total += cur.sum(axis=1)
    return total


def tree_acc_full(n: int) -> int:
    k = tree_depth(n)
    return sum(-(-n // (1 << lvl)) for lvl in range(1, k + 1))


def sequential_acc_counts(mask: np.ndarray) -> np.ndarray:
    rows, n = mask.shape
    anyv = mask.any(axis=1)
    first = np.where(anyv, mask.argmax(axis=1), 0)
    return np.where(anyv, n - np.maximum(first, 1), 0).astype(np.int64)


def b_to_s_per_neuron(n: int) -> int:
    full, rest = divmod(n, CHUNK)
    return full * -(-2 * CHUNK // CHUNK) + (-(-2 * rest // CHUNK) if rest else 0)


@dataclass
class LayerCount:
    index: int
    kind: str
    layer_class: str
    n_out: int
    fan_in: int
    commands: dict
    reads: int
    writes: int
    memory_bits: dict

    def to_dict(self):
        return {
            "index": self.index, "kind": self.kind, "class": self.layer_class,
            "n_out": self.n_out, "fan_in": self.fan_in, "commands": dict(self.commands),
            "reads": self.reads, "writes": self.writes, "memory_bits": dict(self.memory_bits),
        }


@dataclass
class CountReport:
    layers: list = field(default_factory=list)
    assumptions: tuple = ASSUMPTIONS
    benchmark: Optional[str] = None
    targets: Optional[dict] = None

    def _sum(self, layers):
        out = {"commands": {k: 0 for k in KINDS}, "reads": 0, "writes": 0, "memory_bits": 0}
        for lc in layers:
            for k, v in lc.commands.items():
                out["commands"][k] += v
            out["reads"] += lc.reads
            out["writes"] += lc.writes
            out["memory_bits"] += sum(lc.memory_bits.values())
        return out

    @property
    def classes(self) -> dict:
        return {cls: self._sum([lc for lc in self.layers if lc.layer_class == cls])
                for cls in ("fc", "conv")}

    @property
    def totals(self) -> dict:
        return self._sum(self.layers)

    def command_counts(self) -> dict:
        return self.totals["commands"]

    def calibration(self) -> Optional[dict]:
        """Our per-class figures next to the published ones, with ratios."""
        if not self.targets:
            return None
        out = {}
        classes = self.classes
        for cls, tgt in self.targets.items():
            ours = {"memory_gb": classes[cls]["memory_bits"] / 1e9,
                    "reads_m": classes[cls]["reads"] / 1e6,
                    "writes_m": classes[cls]["writes"] / 1e6}
            out[cls] = {
                metric: {"ours": ours[metric], "published": tgt[metric],
                         "ratio": ours[metric] / tgt[metric] if tgt[metric] else None}
                for metric in ("memory_gb", "reads_m", "writes_m")
            }
        return out

    def to_dict(self) -> dict:
        doc = {
            "benchmark": self.benchmark,
            "layers": [lc.to_dict() for lc in self.layers],
            "classes": self.classes,
            "totals": self.totals,
            "assumptions": list(self.assumptions),
        }
        cal = self.calibration()
        if cal is not None:
            doc["calibration"] = cal
            doc["calibration_note"] = ("published figures are comparison targets; their counting "
                                       "assumptions are unpublished, so ratios are informational")
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def count_model(net, config: SimConfig = None, benchmark=None) -> CountReport:
    cfg = config or SimConfig()
    acc_reads = 3 if cfg.acc_cost_mode == "flow3" else 1
    nbanks = len(cfg.pim_banks)
    report = CountReport(benchmark=getattr(benchmark, "name", None),
                         targets=getattr(benchmark, "targets", None))
    if not net.layers:
        return report
    stages = resolve_shapes(net, cfg.conv_padding, cfg.pool_window)
    first = True
    for st in stages:
        if st.kind == "flatten":
            continue
        cmds = {k: 0 for k in KINDS}
        mem = {"weights": 0, "activations": st.n_out * 8, "stochastic": 0}
        if first:
            mem["activations"] += int(np.prod(net.input_shape)) * 8
            first = False
        neg_lanes = 0
        n_out = st.n_out
        if st.kind == "pool":
            cmds["ANN_POOL"] = -(-n_out // GROUP)
        else:
            n = st.fan_in
            rows = st.weight_shape[0]
            per_row = n_out // rows            # conv: output positions per channel
            cmds["ANN_MUL"] = n_out * n
            cmds["B_TO_S"] = n_out * b_to_s_per_neuron(n)
            cmds["S_TO_B"] = -(-n_out // GROUP)
            k = tree_depth(n)
            wt = None if net.weights is None else net.weights.get(st.weight_name)
            if wt is None:
                if cfg.accumulation_mode == "tree":
                    acc = tree_acc_full(n) * n_out
                else:
                    acc = (n - 1) * n_out
            else:
                neg = (wt.negative & (wt.magnitude > 0)).reshape(rows, n)
                pos = ~neg
                if cfg.accumulation_mode == "tree":
                    per = tree_acc_counts(pos, k) + tree_acc_counts(neg, k)
                else:
                    per = sequential_acc_counts(pos) + sequential_acc_counts(neg)
                acc = int(per.sum()) * per_row
                neg_lanes = int(neg.any(axis=1).sum()) * per_row
            cmds["ANN_ACC"] = int(acc)
            mem["weights"] = int(np.prod(st.weight_shape)) * 8
            mem["stochastic"] = min(n_out, GROUP * nbanks) * 2 * min(n, CHUNK) * NBITS
        reads = (33 * cmds["B_TO_S"] + cmds["ANN_MUL"] + acc_reads * cmds["ANN_ACC"]
                 + 32 * cmds["S_TO_B"] + neg_lanes + 32 * cmds["ANN_POOL"])
        writes = (32 * cmds["B_TO_S"] + cmds["ANN_MUL"] + cmds["ANN_ACC"]
                  + 32 * cmds["S_TO_B"] + 32 * cmds["ANN_POOL"])
        report.layers.append(LayerCount(st.index, st.kind, st.layer_class, n_out, st.fan_in,
                                        cmds, reads, writes, mem))
    return report
