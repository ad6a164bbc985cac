"""Sign-magnitude 8-bit tensors and their flat binary container.

Container layout (all integers little-endian)::

    magic    4 bytes   b"PCRT"
    version  u16       1
    count    u32       number of tensors
    per tensor:
        name_len u16, name utf-8
        ndim u8, dims u32 * ndim
        flags u8       bit 0: a sign plane follows
        magnitudes     prod(dims) bytes, row-major
        sign plane     ceil(prod(dims) / 8) bytes, bit i (LSB first) set = negative

Magnitudes are full 8-bit (0..255); the sign lives in its own bit plane so a
weight of magnitude 255 can still be negative.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import TensorFormatError

MAGIC = b"PCRT"
VERSION = 1


@dataclass(frozen=True, eq=False)
class SignedTensor:
    magnitude: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        mag = np.ascontiguousarray(self.magnitude, dtype=np.uint8)
        neg = np.ascontiguousarray(self.negative, dtype=bool)
        if neg.shape != mag.shape:
            raise TensorFormatError("sign plane shape does not match magnitudes")
        mag.flags.writeable = False
        neg.flags.writeable = False
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "negative", neg)

    @classmethod
    def from_signed(cls, values) -> "SignedTensor":
        v = np.asarray(values, dtype=np.int64)
        if v.size and (v.min() < -255 or v.max() > 255):
            raise TensorFormatError("signed magnitudes must lie in -255..255")
        return cls(np.abs(v).astype(np.uint8), v < 0)

    @classmethod
    def unsigned(cls, values) -> "SignedTensor":
        v = np.asarray(values, dtype=np.int64)
        if v.size and (v.min() < 0 or v.max() > 255):
            raise TensorFormatError("activations must lie in 0..255")
        return cls(v.astype(np.uint8), np.zeros(v.shape, dtype=bool))

    @property
    def shape(self):
        return self.magnitude.shape

    def values(self) -> np.ndarray:
        v = self.magnitude.astype(np.int64)
        return np.where(self.negative, -v, v)

    def reshape(self, *shape) -> "SignedTensor":
        return SignedTensor(self.magnitude.reshape(*shape), self.negative.reshape(*shape))

    def __eq__(self, other):
        if not isinstance(other, SignedTensor):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.magnitude, other.magnitude)
                and np.array_equal(self.negative & (self.magnitude > 0),
                                   other.negative & (other.magnitude > 0)))

    def __repr__(self):
        return f"SignedTensor(shape={self.shape})"


def dumps(tensors: dict) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name in sorted(tensors):
        t = tensors[name]
        if not isinstance(t, SignedTensor):
            t = SignedTensor.from_signed(t)
        raw = name.encode("utf-8")
        dims = t.shape
        has_sign = bool(t.negative.any())
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack(f"<B{len(dims)}I", len(dims), *dims))
        out.append(struct.pack("<B", 1 if has_sign else 0))
        out.append(t.magnitude.tobytes())
        if has_sign:
            out.append(np.packbits(t.negative.reshape(-1), bitorder="little").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TensorFormatError("tensor container is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes) -> dict:
    r = _Reader(memoryview(data).tobytes())
    if r.take(4) != MAGIC:
        raise TensorFormatError("not a tensor container (bad magic)")
    version, count = r.unpack("<HI")
    if version != VERSION:
        raise TensorFormatError(f"unsupported container version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        try:
            name = r.take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TensorFormatError("tensor name is not utf-8") from exc
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I") if ndim else ()
        (flags,) = r.unpack("<B")
        if flags & ~1:
            raise TensorFormatError(f"unknown tensor flags {flags:#x}")
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        mag = np.frombuffer(r.take(size), dtype=np.uint8).reshape(dims)
        if flags & 1:
            plane = np.frombuffer(r.take((size + 7) // 8), dtype=np.uint8)
            neg = np.unpackbits(plane, bitorder="little")[:size].astype(bool).reshape(dims)
        else:
            neg = np.zeros(dims, dtype=bool)
        if name in tensors:
            raise TensorFormatError(f"duplicate tensor {name!r}")
        tensors[name] = SignedTensor(mag, neg)
    if r.pos != len(r.data):
        raise TensorFormatError("trailing bytes after last tensor")
    return tensors


def save(path, tensors: dict):
    try:
        with open(path, "wb") as fh:
            fh.write(dumps(tensors))
    except OSError as exc:
        raise TensorFormatError(f"cannot write {path}: {exc}") from exc


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise TensorFormatError(f"cannot read {path}: {exc}") from exc
    return loads(data)
