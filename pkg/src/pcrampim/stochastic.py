"""256-bit unipolar stochastic numbers.

A value ``v`` in 0..255 is encoded as a 256-bit stream with exactly ``v`` set
bits, drawn from a lookup table whose rows are nested: ``rows[v]`` sets bit
``i`` iff ``perm[i] < v`` for one fixed pseudorandom permutation ``perm``.
Because every row shares the same permutation, operands must be spatially
decorrelated before they meet in an AND; that is done with cyclic rotations
(see :func:`row_rotation`).
Activation operands all share the select offset as rotation, which lines the
select bit-planes up with activation ranks; weights take a per-row rotation.
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kernels

NBITS = 256
NWORDS = 4
WORD = np.dtype("<u8")
MASK64 = (1 << 64) - 1

DEFAULT_SEED = 0xC0FFEE
DEFAULT_ROTATION_STRIDE = 245
DEFAULT_SELECT_OFFSET = 211
DEFAULT_SELECT_LEVELS = 16


class Bitstream:
    """Immutable 256-bit stream held as four little-endian uint64 words."""

    __slots__ = ("words",)

    def __init__(self, words):
        arr = np.array(words, dtype=WORD).reshape(NWORDS)
        arr.flags.writeable = False
        self.words = arr

    @classmethod
    def zeros(cls):
        return cls(np.zeros(NWORDS, dtype=WORD))

    @classmethod
    def ones(cls):
        return cls(np.full(NWORDS, MASK64, dtype=WORD))

    @classmethod
    def from_int(cls, x: int) -> "Bitstream":
        if x < 0 or x >> NBITS:
            raise ValueError("integer does not fit in 256 bits")
        return cls(np.frombuffer(x.to_bytes(32, "little"), dtype=WORD))

    @classmethod
    def from_bits(cls, bits) -> "Bitstream":
        bits = np.asarray(bits, dtype=np.uint8).reshape(NBITS)
        return cls(np.packbits(bits, bitorder="little").view(WORD))

    def to_int(self) -> int:
        return int.from_bytes(self.words.tobytes(), "little")

    def bits(self) -> np.ndarray:
        return np.unpackbits(self.words.view(np.uint8), bitorder="little")

    def set_bits(self) -> frozenset:
        return frozenset(np.flatnonzero(self.bits()).tolist())

    @property
    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    @property
    def value(self) -> float:
        return self.popcount / NBITS

    def rotate(self, r: int) -> "Bitstream":
        """Cyclic left rotation: bit ``i`` moves to ``(i + r) % 256``."""
        return Bitstream(kernels.rotl_rows(self.words, [r])[0])

    def __and__(self, other):
        return Bitstream(self.words & other.words)

    def __or__(self, other):
        return Bitstream(self.words | other.words)

    def __xor__(self, other):
        return Bitstream(self.words ^ other.words)

    def __invert__(self):
        return Bitstream(~self.words)

    def __eq__(self, other):
        if not isinstance(other, Bitstream):
            return NotImplemented
        return bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash(self.words.tobytes())

    def hex(self) -> str:
        return f"{self.to_int():064x}"

    def __repr__(self):
        return f"Bitstream(0x{self.hex()}, popcount={self.popcount})"


# -- deterministic permutation generator ------------------------------------


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* generator, seeded through splitmix64 so seed 0 is legal."""

    def __init__(self, seed: int):
        state = _splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64


def make_permutation(seed: int, n: int = NBITS) -> np.ndarray:
    """Fisher-Yates shuffle of ``0..n-1`` driven by :class:`XorShift64Star`."""
    rng = XorShift64Star(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class StochasticLut:
    """The 256x256 binary-to-stochastic table.

    ``rows`` has shape (256, 4) uint64; ``rows[v]`` has popcount ``v``.
    """

    seed: int
    base_permutation: np.ndarray
    rows: np.ndarray

    def row(self, v: int) -> Bitstream:
        return Bitstream(self.rows[v])

    def dump_hex(self) -> str:
        """One line per row, 64 hex digits each, most significant bit first."""
        lines = [f"# stochastic LUT seed=0x{self.seed:x} rows=256 bits=256"]
        for v in range(NBITS):
            lines.append(f"{v:3d} {Bitstream(self.rows[v]).hex()}")
        return "\n".join(lines) + "\n"


def build_lut(seed: int = DEFAULT_SEED) -> StochasticLut:
    perm = make_permutation(seed)
    perm.flags.writeable = False
    v = np.arange(NBITS)[:, None]
    bits = (perm[None, :] < v).astype(np.uint8)
    rows = np.packbits(bits, axis=1, bitorder="little").view(WORD).reshape(NBITS, NWORDS)
    rows.flags.writeable = False
    return StochasticLut(seed=seed, base_permutation=perm, rows=rows)


def row_rotation(row_index: int, stride: int = DEFAULT_ROTATION_STRIDE) -> int:
    """Per-row rotation ``row_index * stride mod 256`` (weights and other operands)."""
    return (row_index * stride) % NBITS


def encode(v: int, lut: StochasticLut, rotation: int = 0) -> Bitstream:
    if not 0 <= v <= 255:
        raise ValueError(f"operand {v} outside 0..255")
    return Bitstream(kernels.encode_rows(lut.rows, [v], [rotation])[0])


def decode(b: Bitstream) -> int:
    """Popcount of ``b``, saturated to 255.

    A full 256-bit stream can only arise from OR-based arithmetic; use
    :func:`is_saturated` to detect it.
    """
    return min(b.popcount, 255)


def is_saturated(b: Bitstream) -> bool:
    return b.popcount >= NBITS


def stochastic_multiply(a: Bitstream, b: Bitstream) -> Bitstream:
    return a & b


@dataclass(frozen=True, eq=False)
class SelectStreams:
    """MUX select pair; ``s`` has popcount 128 and ``s_complement == ~s``."""

    s: Bitstream
    s_complement: Bitstream

    @classmethod
    def from_stream(cls, s: Bitstream) -> "SelectStreams":
        return cls(s, ~s)


def stochastic_scaled_add(a: Bitstream, b: Bitstream, sel: SelectStreams) -> Bitstream:
    """MUX adder: ``(s & a) | (~s & b)``, expected value ``(a + b) / 2``."""
    return (sel.s & a) | (sel.s_complement & b)


def select_streams(lut: StochasticLut, level: int = 1, offset: int = DEFAULT_SELECT_OFFSET) -> SelectStreams:
    """Select pair for one accumulation level (1-based).

    Level ``l`` sets bit ``i`` iff bit-plane ``(l-1) % 8`` of
    ``perm[(i - r) % 256]`` is 0, with ``r = offset`` for the first eight
    levels and advancing by ``offset`` every eight levels after that.  The
    planes are independent, so every depth-``k`` path mask of a balanced tree
    covers exactly ``256 / 2**k`` bits.  Because activation streams are
    rotated by the same ``offset``, each path mask also samples every
    ``2**k``-th activation rank, so small activations are not starved.
    """
    if level < 1:
        raise ValueError("select levels are 1-based")
    plane = (level - 1) % 8
    rot = (offset * (1 + (level - 1) // 8)) % NBITS
    src = (np.arange(NBITS) - rot) % NBITS
    bits = ((lut.base_permutation[src] >> plane) & 1) == 0
    s = Bitstream.from_bits(bits.astype(np.uint8))
    return SelectStreams.from_stream(s)


def select_schedule(lut: StochasticLut, levels: int = DEFAULT_SELECT_LEVELS,
                    offset: int = DEFAULT_SELECT_OFFSET) -> tuple:
    return tuple(select_streams(lut, lvl, offset) for lvl in range(1, levels + 1))


SelectArg = Union[SelectStreams, Sequence[SelectStreams]]


def select_arrays(schedule) -> tuple:
    """Stack a select schedule into ``(s, s_complement)`` word arrays for reuse."""
    return (np.stack([x.s.words for x in schedule]),
            np.stack([x.s_complement.words for x in schedule]))


def _select_arrays(sel: SelectArg, depth: int):
    if isinstance(sel, tuple) and len(sel) == 2 and isinstance(sel[0], np.ndarray):
        return sel
    if isinstance(sel, SelectStreams):
        seq = [sel] * max(depth, 1)
    else:
        seq = list(sel)
    s = np.stack([x.s.words for x in seq])
    sc = np.stack([x.s_complement.words for x in seq])
    return s, sc


def tree_depth(n: int) -> int:
    """Exponent of the next power of two >= n."""
    if n < 1:
        raise ValueError("need at least one operand")
    return (n - 1).bit_length()


def accumulate_tree(operands: Sequence[Bitstream], sel: SelectArg, mode: str = "tree"):
    """Reduce operands with MUX adders.

    ``mode="tree"`` pads to ``2**k`` with zero streams and reduces pairwise;
    node ``(left, right)`` at level ``l`` is ``scaled_add(left, right, sel_l)``.
    ``mode="sequential"`` folds left to right, ``acc = scaled_add(x_t, acc)``,
    which weights operand ``t`` by ``2**-(n-t)``; it reports the same exponent
    as the tree so both modes share one rescale.

    ``sel`` is either one :class:`SelectStreams` reused at every level, or a
    per-level sequence.  Reusing one pair across levels makes deeper levels
    reselect bits that earlier levels already chose, so only the outermost
    operands survive; pass a schedule from :func:`select_schedule` for sums.

    Returns ``(stream, k)``.
    """
    if not operands:
        raise ValueError("accumulate_tree needs at least one operand")
    leaves = np.stack([op.words for op in operands])
    out, k = accumulate_words(leaves, sel, mode)
    return Bitstream(out), k


def accumulate_words(leaves: np.ndarray, sel: SelectArg, mode: str = "tree"):
    """Array form of :func:`accumulate_tree`: ``leaves`` is ``(n, 4)`` uint64."""
    leaves = np.ascontiguousarray(leaves, dtype=WORD).reshape(-1, NWORDS)
    n = leaves.shape[0]
    k = tree_depth(n)
    if mode == "tree":
        s, sc = _select_arrays(sel, k)
        return kernels.tree_reduce(leaves, s, sc)
    if mode == "sequential":
        s, sc = _select_arrays(sel, n - 1)
        return kernels.fold_reduce(leaves, s, sc), k
    raise ValueError(f"unknown accumulation mode {mode!r}")


@dataclass(frozen=True)
class SignedOperand:
    """8-bit magnitude plus a sign flag (``negative``)."""

    magnitude: int
    negative: bool = False

    def __post_init__(self):
        if not 0 <= self.magnitude <= 255:
            raise ValueError(f"magnitude {self.magnitude} outside 0..255")

    @classmethod
    def from_int(cls, x: int) -> "SignedOperand":
        return cls(abs(x), x < 0)

    def __int__(self):
        return -self.magnitude if self.negative else self.magnitude
