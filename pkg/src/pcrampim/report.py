"""Run reports, CSV rollups and the configuration self-check."""

import csv
import hashlib
import io
import json

from . import __version__
from .commands import KINDS
from .compiler.topology import render_topology
from .config import SimConfig
from .engine import command_counts
from .pcram import TABLE3_ADDONS

TOOL_NAME = "pcrampim"
ROLLUP_COLUMNS = ("scope", "key", "commands", "reads", "writes", "latency_ns", "energy_pj",
                  "addon_energy_pj")

# (reads, writes, latency ns) per command with the default timing
TABLE1 = {
    "B_TO_S": (33, 32, 3504.0),
    "ANN_MUL": (1, 1, 108.0),
    "ANN_ACC": (1, 1, 108.0),
    "S_TO_B": (32, 32, 3456.0),
    "ANN_POOL": (32, 32, 3456.0),
}
CAPACITY_BYTES = 16 * 2 ** 30


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def tool_info() -> dict:
    return {"name": TOOL_NAME, "version": __version__}


def build_run_report(net, result, config: SimConfig, reference=None, inputs_digest=None) -> dict:
    ledger = result.ledger
    totals = ledger.totals()
    doc = {
        "tool": tool_info(),
        "config_fingerprint": config.fingerprint(),
        "topology": render_topology(net),
        "input_shape": list(net.input_shape),
        "totals": {
            "latency_ns": totals["makespan_ns"],
            "busy_ns": totals["latency_ns"],
            "reads": totals["reads"],
            "writes": totals["writes"],
            "commands": totals["commands"],
            "energy_pj": totals["energy_pj"],
            "addon_energy_pj": totals["addon_energy_pj"],
            "total_energy_pj": totals["total_energy_pj"],
        },
        "by_kind": ledger.rollup("kind"),
        "by_layer": {str(k): v for k, v in ledger.rollup("layer").items()},
        "by_bank": {str(k): v for k, v in ledger.rollup("bank").items()},
        "output": [int(v) for v in result.output.reshape(-1)],
        "output_shape": list(result.output.shape),
        "diagnostics": result.diagnostics,
    }
    if inputs_digest:
        doc["inputs"] = dict(inputs_digest)
    if reference is not None:
        from .runtime import compare

        doc["accuracy"] = {"reference": [int(v) for v in reference.reshape(-1)],
                           **compare(result.output, reference)}
    return doc


def dumps_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def rollup_csv(doc) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROLLUP_COLUMNS)
    for scope, key in (("kind", "by_kind"), ("layer", "by_layer"), ("bank", "by_bank")):
        items = doc[key].items()
        if scope != "kind":
            items = sorted(items, key=lambda kv: int(kv[0]))
        for name, v in items:
            w.writerow([scope, name, v["commands"], v["reads"], v["writes"], v["latency_ns"],
                        v["energy_pj"], v["addon_energy_pj"]])
    t = doc["totals"]
    w.writerow(["total", "makespan", t["commands"], t["reads"], t["writes"], t["latency_ns"],
                t["energy_pj"], t["addon_energy_pj"]])
    return buf.getvalue()


def count_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "kind", "class", "n_out", "fan_in", *KINDS, "reads", "writes",
                "memory_bits"])
    for lc in report.layers:
        w.writerow([lc.index, lc.kind, lc.layer_class, lc.n_out, lc.fan_in,
                    *(lc.commands[k] for k in KINDS), lc.reads, lc.writes,
                    sum(lc.memory_bits.values())])
    return buf.getvalue()


def validate_config(config: SimConfig) -> dict:
    """Five command totals, capacity and add-on table checks."""
    t = config.timing
    rows = []
    for kind, (er, ew, elat) in TABLE1.items():
        r, w = command_counts(kind, config.acc_cost_mode)
        lat = r * t.t_read + w * t.t_write
        rows.append({"kind": kind, "expected": {"reads": er, "writes": ew, "latency_ns": elat},
                     "computed": {"reads": r, "writes": w, "latency_ns": lat},
                     "ok": (r, w, lat) == (er, ew, elat)})
    cap = config.geometry.capacity_bytes
    missing = sorted(set(TABLE3_ADDONS) - set(config.energy.addon))
    diagnostics = []
    for row in rows:
        if not row["ok"]:
            diagnostics.append(
                f"{row['kind']}: expected {row['expected']['latency_ns']:g} ns "
                f"({row['expected']['reads']}R/{row['expected']['writes']}W), computed "
                f"{row['computed']['latency_ns']:g} ns "
                f"({row['computed']['reads']}R/{row['computed']['writes']}W)")
    if cap != CAPACITY_BYTES:
        diagnostics.append(f"capacity is {cap} bytes, expected {CAPACITY_BYTES} (16 GiB)")
    if missing:
        diagnostics.append("energy add-on table lacks: " + ", ".join(missing))
    return {
        "tool": tool_info(),
        "config_fingerprint": config.fingerprint(),
        "table1": rows,
        "capacity": {"bytes": cap, "expected_bytes": CAPACITY_BYTES, "ok": cap == CAPACITY_BYTES},
        "addons": {"missing": missing, "ok": not missing},
        "diagnostics": diagnostics,
        "ok": not diagnostics,
    }


def format_validation(doc) -> str:
    lines = [f"{'command':<9} {'reads':>5} {'writes':>6} {'expected ns':>11} {'computed ns':>11}  status"]
    for row in doc["table1"]:
        c, e = row["computed"], row["expected"]
        lines.append(f"{row['kind']:<9} {c['reads']:>5} {c['writes']:>6} {e['latency_ns']:>11g} "
                     f"{c['latency_ns']:>11g}  {'ok' if row['ok'] else 'FAIL'}")
    cap = doc["capacity"]
    lines.append(f"capacity {cap['bytes']} bytes ({cap['bytes'] / 2 ** 30:g} GiB)  "
                 f"{'ok' if cap['ok'] else 'FAIL'}")
    lines.append(f"add-on table  {'ok' if doc['addons']['ok'] else 'FAIL'}")
    for d in doc["diagnostics"]:
        lines.append(f"diagnostic: {d}")
    return "\n".join(lines) + "\n"
