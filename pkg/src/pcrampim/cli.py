"""Command-line entry point: ``pcrampim run | count | validate | plot | lut``.

Exit codes: 0 success, 1 internal error, 2 parse / validation error,
3 configuration error or failed self-check, 4 placement error, 5 I/O error,
6 scheduling error, 7 address or constraint violation.  Errors are reported
on stderr as one JSON object ``{"error": <category>, "message": ...}``.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import config as config_mod
from . import tensorio
from .commands import write_trace
from .compiler import (BENCHMARKS, bind_weights, count_model, lower, random_input, random_weights,
                       resolve_topology)
from .engine import PimcEngine
from .errors import EXIT_CODES, SimError, TensorFormatError, ValidationError
from .report import (build_run_report, count_csv, dumps_json, format_validation, rollup_csv,
                     sha256_hex, validate_config)
from .runtime import run_reference, run_stochastic


def _topology_text(arg: str) -> str:
    if arg.startswith("@"):
        try:
            with open(arg[1:], "r", encoding="utf-8") as fh:
                return fh.read().strip()
        except OSError as exc:
            raise TensorFormatError(f"cannot read topology file {arg[1:]}: {exc}") from exc
    return arg


def _shape(text):
    if text is None:
        return None
    try:
        dims = tuple(int(d) for d in text.replace("x", ",").split(",") if d.strip())
    except ValueError as exc:
        raise ValidationError(f"bad --input-shape {text!r}") from exc
    if not dims or any(d <= 0 for d in dims):
        raise ValidationError(f"bad --input-shape {text!r}")
    return dims


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise TensorFormatError(f"cannot write {out}: {exc}") from exc


def _network(args, cfg):
    net = resolve_topology(_topology_text(args.topology), _shape(args.input_shape))
    if net.input_shape is None:
        raise ValidationError("topology starts with a convolution; pass --input-shape H,W,C")
    return net


def cmd_run(args) -> int:
    cfg = config_mod.load(args.config)
    net = _network(args, cfg)
    digest = {}
    if args.weights:
        with open_bytes(args.weights) as data:
            tensors = tensorio.loads(data)
        digest["weights_sha256"] = sha256_hex(data)
    elif args.random_weights is not None:
        tensors = random_weights(net, args.random_weights, conv_padding=cfg.conv_padding,
                                 pool_window=cfg.pool_window)
        digest["weights_sha256"] = sha256_hex(tensorio.dumps(tensors))
    else:
        raise ValidationError("pass --weights PATH or --random-weights SEED")
    net = bind_weights(net, tensors, cfg.conv_padding, cfg.pool_window)
    if args.input:
        with open_bytes(args.input) as data:
            found = tensorio.loads(data)
        digest["input_sha256"] = sha256_hex(data)
        if len(found) != 1 and "input" not in found:
            raise ValidationError("input file must hold one tensor (or one named 'input')")
        x = found.get("input") or next(iter(found.values()))
    elif args.random_input is not None:
        x = random_input(net.input_shape, args.random_input)
        digest["input_sha256"] = sha256_hex(tensorio.dumps({"input": x}))
    else:
        raise ValidationError("pass --input PATH or --random-input SEED")

    engine = PimcEngine(cfg)
    result = run_stochastic(net, x, engine=engine, workers=args.workers)
    reference = None if args.no_reference else run_reference(net, x, cfg)
    doc = build_run_report(net, result, cfg, reference, digest)
    if args.trace:
        try:
            with open(args.trace, "w", encoding="utf-8") as fh:
                write_trace(result.lowered.stream, fh)
        except OSError as exc:
            raise TensorFormatError(f"cannot write trace {args.trace}: {exc}") from exc
    if args.ledger:
        text = result.ledger.to_csv() if args.ledger.endswith(".csv") else result.ledger.to_json()
        _emit(text, args.ledger)
    _emit(rollup_csv(doc) if args.format == "csv" else dumps_json(doc), args.out)
    return 0


class open_bytes:
    """``with open_bytes(path) as data`` reads a whole file, mapping OSError to an I/O error."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        try:
            with open(self.path, "rb") as fh:
                return fh.read()
        except OSError as exc:
            raise TensorFormatError(f"cannot read {self.path}: {exc}") from exc

    def __exit__(self, *exc):
        return False


def cmd_count(args) -> int:
    cfg = config_mod.load(args.config)
    text = _topology_text(args.topology)
    bench = BENCHMARKS.get(text.strip().upper())
    if bench is None:
        for b in BENCHMARKS.values():
            if resolve_topology(b.topology).layers == resolve_topology(text).layers:
                bench = b
                break
    net = _network(args, cfg)
    report = count_model(net, cfg, bench)
    if args.format == "csv":
        _emit(count_csv(report), args.out)
    else:
        doc = report.to_dict()
        doc["tool"] = {"name": "pcrampim", "version": __version__}
        doc["config_fingerprint"] = cfg.fingerprint()
        _emit(dumps_json(doc), args.out)
    return 0


def cmd_validate(args) -> int:
    cfg = config_mod.load(args.config)
    doc = validate_config(cfg)
    _emit(dumps_json(doc) if args.format == "json" else format_validation(doc), args.out)
    return 0 if doc["ok"] else EXIT_CODES["config"]


def _series(doc):
    layers = sorted(doc["by_layer"].items(), key=lambda kv: int(kv[0]))
    return [(int(k), v["latency_ns"], v["energy_pj"] + v["addon_energy_pj"]) for k, v in layers]


def cmd_plot(args) -> int:
    try:
        with open(args.report, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"cannot read report {args.report}: {exc}") from exc
    if "by_layer" not in doc:
        raise ValidationError("report has no per-layer rollup (expected output of `pcrampim run`)")
    rows = _series(doc)
    if args.out.endswith(".dat"):
        lines = ["# layer busy_ns energy_pj"] + [f"{i} {lat!r} {e!r}" for i, lat, e in rows]
        _emit("\n".join(lines) + "\n", args.out)
        return 0
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ValidationError("matplotlib is not installed; write a .dat file instead") from exc
    idx = np.arange(len(rows))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(idx, [r[1] for r in rows])
    ax1.set_title("busy time per layer (ns)")
    ax2.bar(idx, [r[2] for r in rows], color="tab:orange")
    ax2.set_title("energy per layer (pJ)")
    for ax in (ax1, ax2):
        ax.set_xticks(idx, [str(r[0]) for r in rows])
        ax.set_xlabel("layer")
    fig.tight_layout()
    try:
        fig.savefig(args.out)
    except OSError as exc:
        raise TensorFormatError(f"cannot write {args.out}: {exc}") from exc
    finally:
        plt.close(fig)
    return 0


def cmd_lut(args) -> int:
    from .stochastic import build_lut

    cfg = config_mod.load(args.config)
    _emit(build_lut(cfg.lut_seed).dump_hex(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcrampim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pcrampim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, topology=True):
        sp.add_argument("--config", help=f"TOML config (default: ${config_mod.CONFIG_ENV} or built-in)")
        sp.add_argument("--out", help="output path (default stdout)")
        if topology:
            sp.add_argument("--topology", required=True,
                            help="topology string, @FILE, or a benchmark name (CNN1, CNN2, VGG1, VGG2)")
            sp.add_argument("--input-shape", help="H,W,C of the network input")

    run = sub.add_parser("run", help="simulate one inference")
    common(run)
    run.add_argument("--weights", help="weight tensor container")
    run.add_argument("--random-weights", type=int, metavar="SEED")
    run.add_argument("--input", help="input tensor container")
    run.add_argument("--random-input", type=int, metavar="SEED")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--trace", help="write the command stream trace here")
    run.add_argument("--ledger", help="write the per-command ledger (.csv or .json)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--no-reference", action="store_true", help="skip the exact reference")
    run.set_defaults(func=cmd_run)

    cnt = sub.add_parser("count", help="analytic command / read / write / memory counts")
    common(cnt)
    cnt.add_argument("--format", choices=("json", "csv"), default="json")
    cnt.set_defaults(func=cmd_count)

    val = sub.add_parser("validate", help="check a config against the command timing table")
    common(val, topology=False)
    val.add_argument("--format", choices=("text", "json"), default="text")
    val.set_defaults(func=cmd_validate)

    plot = sub.add_parser("plot", help="per-layer latency / energy bars from a run report")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out", required=True, help=".png/.svg/.pdf image or .dat data file")
    plot.set_defaults(func=cmd_plot)

    lut = sub.add_parser("lut", help="dump the stochastic LUT as hex")
    common(lut, topology=False)
    lut.set_defaults(func=cmd_lut)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
        return EXIT_CODES[exc.category]
    except Exception as exc:  # pragma: no cover - last resort
        sys.stderr.write(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return EXIT_CODES["internal"]


if __name__ == "__main__":
    sys.exit(main())
