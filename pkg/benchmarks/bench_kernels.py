"""Time the compiled kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N] [--json out.json]``.
Every kernel runs on identical inputs in both backends; outputs are compared
before timings are reported.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from pcrampim import kernels
from pcrampim.stochastic import build_lut, select_arrays, select_schedule


def workloads(rng):
    lut = build_lut()
    s, sc = select_arrays(select_schedule(lut, 16))
    streams = rng.integers(0, 2 ** 63, size=(4096, 4), dtype=np.uint64)
    values = rng.integers(0, 256, size=4096)
    rots = rng.integers(0, 256, size=4096)
    leaves = streams[:1024]
    small = streams[:256]
    return {
        "popcount_rows x4096": lambda k: k.popcount_rows(streams),
        "rotl_rows x4096": lambda k: k.rotl_rows(streams, rots),
        "encode_rows x4096": lambda k: k.encode_rows(lut.rows, values, rots),
        "tree_reduce 1024 leaves": lambda k: k.tree_reduce(leaves, s, sc)[0],
        "fold_reduce 1024 leaves": lambda k: k.fold_reduce(leaves, s, sc),
        "and_popcount_matrix 256x256": lambda k: k.and_popcount_matrix(small, small),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy fallback only", file=sys.stderr)
    mods = {name: kernels.load_backend(name) for name in backends}
    results = []
    for label, fn in workloads(np.random.default_rng(0)).items():
        outs = {name: np.asarray(fn(mod)) for name, mod in mods.items()}
        ref = outs["python"]
        if any(not np.array_equal(o, ref) for o in outs.values()):
            raise SystemExit(f"backend outputs differ for {label}")
        row = {"kernel": label}
        for name, mod in mods.items():
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            row[name] = min(timer.repeat(args.repeat, n)) / n
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)

    print(f"{'kernel':30s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for row in results:
        cy = f"{row['cython'] * 1e6:10.1f}us" if "cython" in row else f"{'-':>12s}"
        sp = f"{row['speedup']:7.1f}x" if "speedup" in row else f"{'-':>8s}"
        print(f"{row['kernel']:30s} {row['python'] * 1e6:10.1f}us {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
