"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it has been built; setting
``PCRAMPIM_PURE_PYTHON=1`` forces the numpy fallback.  Both backends are
bit-for-bit interchangeable.
"""

import importlib
import os

_NAMES = (
    "popcount_rows",
    "rotl_rows",
    "encode_rows",
    "tree_reduce",
    "fold_reduce",
    "and_popcount_matrix",
)


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("pcrampim._ckernels")
    if name == "python":
        return importlib.import_module("pcrampim._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if os.environ.get("PCRAMPIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = load_backend("python")
else:
    try:
        _impl = load_backend("cython")
    except ImportError:
        _impl = load_backend("python")

BACKEND = "cython" if _impl.__name__.endswith("_ckernels") else "python"

popcount_rows = _impl.popcount_rows
rotl_rows = _impl.rotl_rows
encode_rows = _impl.encode_rows
tree_reduce = _impl.tree_reduce
fold_reduce = _impl.fold_reduce
and_popcount_matrix = _impl.and_popcount_matrix

__all__ = ["BACKEND", "load_backend", "available_backends", *_NAMES]
