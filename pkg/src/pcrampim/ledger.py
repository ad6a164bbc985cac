"""Columnar, additive cost ledger.

One row per executed command.  ``latency_ns`` is the command's own busy time
(reads * t_read + writes * t_write); ``start_ns``/``finish_ns`` come from the
scheduler.  The run's total latency is the makespan, not the latency sum.
"""

import csv
import io
import json
from array import array

from .commands import KINDS

COLUMNS = ("seq", "kind", "bank", "layer", "reads", "writes", "start_ns", "finish_ns",
           "latency_ns", "energy_pj", "addon_energy_pj")
_TYPES = {"seq": "q", "kind": "b", "bank": "q", "layer": "q", "reads": "q", "writes": "q",
          "start_ns": "d", "finish_ns": "d", "latency_ns": "d", "energy_pj": "d",
          "addon_energy_pj": "d"}
_SUMMED = ("reads", "writes", "latency_ns", "energy_pj", "addon_energy_pj")


class CostLedger:
    def __init__(self):
        self._cols = {name: array(_TYPES[name]) for name in COLUMNS}
        self.makespan_ns = 0.0

    def __len__(self):
        return len(self._cols["seq"])

    def record(self, seq, kind, bank, layer, reads, writes, start_ns, finish_ns,
               latency_ns, energy_pj, addon_energy_pj):
        c = self._cols
        c["seq"].append(seq)
        c["kind"].append(KINDS.index(kind) if isinstance(kind, str) else kind)
        c["bank"].append(bank)
        c["layer"].append(layer)
        c["reads"].append(reads)
        c["writes"].append(writes)
        c["start_ns"].append(start_ns)
        c["finish_ns"].append(finish_ns)
        c["latency_ns"].append(latency_ns)
        c["energy_pj"].append(energy_pj)
        c["addon_energy_pj"].append(addon_energy_pj)
        if finish_ns > self.makespan_ns:
            self.makespan_ns = finish_ns

    def column(self, name):
        return self._cols[name]

    def rows(self):
        cols = [self._cols[n] for n in COLUMNS]
        for values in zip(*cols):
            row = list(values)
            row[1] = KINDS[row[1]]
            yield tuple(row)

    def entry(self, i) -> dict:
        row = dict(zip(COLUMNS, (self._cols[n][i] for n in COLUMNS)))
        row["kind"] = KINDS[row["kind"]]
        return row

    # -- aggregation ----------------------------------------------------------

    def totals(self) -> dict:
        out = {name: sum(self._cols[name]) for name in _SUMMED}
        out["commands"] = len(self)
        out["total_energy_pj"] = out["energy_pj"] + out["addon_energy_pj"]
        out["makespan_ns"] = self.makespan_ns
        return out

    def rollup(self, key: str) -> dict:
        """Sums grouped by ``kind``, ``layer`` or ``bank``; keys sorted."""
        if key not in ("kind", "layer", "bank"):
            raise ValueError(f"cannot roll up by {key!r}")
        groups = {}
        keys = self._cols[key]
        cols = [self._cols[n] for n in _SUMMED]
        for i, g in enumerate(keys):
            acc = groups.get(g)
            if acc is None:
                acc = groups[g] = [0] * (len(_SUMMED) + 1)
            for j, col in enumerate(cols):
                acc[j] += col[i]
            acc[-1] += 1
        out = {}
        for g in sorted(groups):
            acc = groups[g]
            label = KINDS[g] if key == "kind" else g
            entry = dict(zip(_SUMMED, acc[:-1]))
            entry["commands"] = acc[-1]
            out[label] = entry
        return out

    def merge(self, other: "CostLedger"):
        for name in COLUMNS:
            self._cols[name].extend(other._cols[name])
        self.makespan_ns = max(self.makespan_ns, other.makespan_ns)

    # -- serialisation --------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "columns": list(COLUMNS),
            "rows": [list(r) for r in self.rows()],
            "totals": self.totals(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows():
            w.writerow(r)
        return buf.getvalue()
