"""Pure numpy implementations of the bitstream kernels.

All streams are 256 bits stored as four little-endian uint64 words, bit ``i``
living in word ``i // 64`` at position ``i % 64``.  Every function here has a
compiled twin in ``_ckernels.pyx`` with the same signature and results.
"""

import numpy as np

WORD = np.dtype("<u8")
NWORDS = 4
NBITS = 256


def popcount_rows(a):
    a = np.asarray(a, dtype=WORD).reshape(-1, NWORDS)
    return np.bitwise_count(a).sum(axis=1, dtype=np.int64)


def _unpack(a):
    return np.unpackbits(a.view(np.uint8).reshape(-1, NWORDS * 8), axis=1, bitorder="little")


def _pack(bits):
    return np.packbits(bits, axis=1, bitorder="little").view(WORD).reshape(-1, NWORDS)


def rotl_rows(a, rotations):
    a = np.ascontiguousarray(a, dtype=WORD).reshape(-1, NWORDS)
    rot = np.asarray(rotations, dtype=np.int64).reshape(-1) % NBITS
    if rot.size == 1 and a.shape[0] != 1:
        rot = np.full(a.shape[0], rot[0], dtype=np.int64)
    bits = _unpack(a)
    # out bit i = in bit (i - r)
    idx = (np.arange(NBITS)[None, :] - rot[:, None]) % NBITS
    out = np.take_along_axis(bits, idx, axis=1)
    return _pack(out)


def encode_rows(lut_rows, values, rotations):
    values = np.asarray(values, dtype=np.int64).reshape(-1)
    if values.size and (values.min() < 0 or values.max() > 255):
        raise ValueError("operand out of 8-bit range")
    base = np.ascontiguousarray(lut_rows, dtype=WORD)[values]
    return rotl_rows(base, np.broadcast_to(np.asarray(rotations, dtype=np.int64), values.shape))


def _mux(s, sc, a, b):
    return (s & a) | (sc & b)


def tree_reduce(leaves, sel, selc):
    """Balanced MUX tree; level ``l`` (1-based) uses ``sel[l-1]``.

    Leaves are padded with zero streams to the next power of two.  Returns the
    root stream and the tree depth.
    """
    leaves = np.ascontiguousarray(leaves, dtype=WORD).reshape(-1, NWORDS)
    n = leaves.shape[0]
    k = (n - 1).bit_length() if n > 1 else 0
    if k > len(sel):
        raise ValueError(f"tree depth {k} exceeds {len(sel)} select levels")
    level = np.zeros((1 << k, NWORDS), dtype=WORD)
    level[:n] = leaves
    for depth in range(k):
        s = sel[depth]
        sc = selc[depth]
        level = _mux(s, sc, level[0::2], level[1::2])
    return level[0].copy(), k


def fold_reduce(leaves, sel, selc):
    """Left fold ``acc = mux(x_t, acc)``; step ``t`` uses ``sel[(t-1) % L]``."""
    leaves = np.ascontiguousarray(leaves, dtype=WORD).reshape(-1, NWORDS)
    acc = leaves[0].copy()
    nsel = len(sel)
    for t in range(1, leaves.shape[0]):
        j = (t - 1) % nsel
        acc = _mux(sel[j], selc[j], leaves[t], acc)
    return acc


def and_popcount_matrix(a, b):
    a = np.ascontiguousarray(a, dtype=WORD).reshape(-1, NWORDS)
    b = np.ascontiguousarray(b, dtype=WORD).reshape(-1, NWORDS)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int64)
    for i in range(a.shape[0]):
        out[i] = np.bitwise_count(a[i][None, :] & b).sum(axis=1)
    return out
