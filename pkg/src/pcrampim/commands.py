"""PIM controller commands, command streams and the line-oriented trace format.

Operand encodings are flat integers so a command is cheap to build, hash and
serialise.  Within one bank's compute partition a *slot* is
``row * blocks_per_row + block_index``; binary data elsewhere is addressed by
global linear *block* ids or *byte* addresses (``block * 32 + lane``).  A
negative operand means "absent / zero".

==========  ==========================  ==================  =====================
kind        src                         dst                 extra
==========  ==========================  ==================  =====================
B_TO_S      byte addresses, one a lane  compute slots       -
ANN_MUL     (slot_a, slot_b)            (slot,)             -
ANN_ACC     (slot_src, slot_acc)        (slot,)             level
S_TO_B      32 positive-tree slots      (block,)            aux = negative slots,
                                                            scale_exponent
ANN_POOL    32 x arity byte addresses   (block,)            arity
==========  ==========================  ==================  =====================
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, List

from .errors import ParseError

KINDS = ("B_TO_S", "ANN_MUL", "ANN_ACC", "S_TO_B", "ANN_POOL")
KIND_INDEX = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class PimcCommand:
    kind: str
    bank: int
    src: tuple = ()
    dst: tuple = ()
    layer: int = 0
    aux: tuple = ()
    level: int = 0
    scale_exponent: int = 0
    arity: int = 0
    deps: tuple = ()

    def __post_init__(self):
        if self.kind not in KIND_INDEX:
            raise ValueError(f"unknown command kind {self.kind!r}")


def b_to_s(bank, src_bytes, dst_slots, layer=0, deps=()):
    return PimcCommand("B_TO_S", bank, tuple(src_bytes), tuple(dst_slots), layer, deps=tuple(deps))


def ann_mul(bank, slot_a, slot_b, dst, layer=0, deps=()):
    return PimcCommand("ANN_MUL", bank, (slot_a, slot_b), (dst,), layer, deps=tuple(deps))


def ann_acc(bank, src, acc, dst=None, level=1, layer=0, deps=()):
    return PimcCommand("ANN_ACC", bank, (src, acc), (acc if dst is None else dst,), layer,
                       level=level, deps=tuple(deps))


def s_to_b(bank, pos_slots, dst_block, scale_exponent=0, neg_slots=(), layer=0, deps=()):
    return PimcCommand("S_TO_B", bank, tuple(pos_slots), (dst_block,), layer, aux=tuple(neg_slots),
                       scale_exponent=scale_exponent, deps=tuple(deps))


def ann_pool(bank, src_bytes, dst_block, arity=4, layer=0, deps=()):
    return PimcCommand("ANN_POOL", bank, tuple(src_bytes), (dst_block,), layer, arity=arity,
                       deps=tuple(deps))


class CommandStream:
    """Ordered commands, optionally held as lazily generated segments.

    A segment is an iterable of commands; iterating the stream walks the
    segments in order.  Segments are typically one per layer, which lets the
    scheduler execute a layer's banks concurrently.  ``deps`` on a command
    refer to global sequence numbers (position in the stream).
    """

    def __init__(self, commands: Iterable = None):
        self._segments = []
        self._labels = []
        if commands is not None:
            self.add_segment(commands)

    def add_segment(self, commands, label=None):
        self._segments.append(commands)
        self._labels.append(label)
        return self

    def append(self, cmd: PimcCommand) -> int:
        """Append to the trailing list segment; returns the command's index in it."""
        if not self._segments or not isinstance(self._segments[-1], list):
            self._segments.append([])
            self._labels.append(None)
        self._segments[-1].append(cmd)
        return len(self._segments[-1]) - 1

    def segments(self) -> Iterator:
        for label, seg in zip(self._labels, self._segments):
            yield label, (seg() if callable(seg) else seg)

    def __iter__(self) -> Iterator[PimcCommand]:
        for _, seg in self.segments():
            yield from seg

    def materialize(self) -> List[PimcCommand]:
        return list(self)

    def counts(self) -> dict:
        out = {k: 0 for k in KINDS}
        for cmd in self:
            out[cmd.kind] += 1
        return out


# -- trace format -----------------------------------------------------------

def _fmt_tuple(values):
    return ",".join(str(v) for v in values) if values else "-"


def _parse_tuple(text):
    if text == "-":
        return ()
    return tuple(int(v) for v in text.split(","))


_TUPLE_FIELDS = ("src", "dst", "aux", "deps")
_INT_FIELDS = ("layer", "level", "scale_exponent", "arity")


def format_command(seq: int, cmd: PimcCommand) -> str:
    parts = [str(seq), str(cmd.bank), cmd.kind, f"layer={cmd.layer}"]
    parts.append(f"src={_fmt_tuple(cmd.src)}")
    parts.append(f"dst={_fmt_tuple(cmd.dst)}")
    if cmd.aux:
        parts.append(f"aux={_fmt_tuple(cmd.aux)}")
    if cmd.kind == "ANN_ACC":
        parts.append(f"level={cmd.level}")
    if cmd.kind == "S_TO_B":
        parts.append(f"scale_exponent={cmd.scale_exponent}")
    if cmd.kind == "ANN_POOL":
        parts.append(f"arity={cmd.arity}")
    if cmd.deps:
        parts.append(f"deps={_fmt_tuple(cmd.deps)}")
    return " ".join(parts)


def parse_command(line: str):
    """Inverse of :func:`format_command`; returns ``(seq, cmd)``."""
    fields = line.split()
    if len(fields) < 3:
        raise ParseError(f"trace line needs <seq> <bank> <kind>: {line!r}")
    try:
        seq, bank = int(fields[0]), int(fields[1])
    except ValueError as exc:
        raise ParseError(f"bad trace header in {line!r}") from exc
    kind = fields[2]
    if kind not in KIND_INDEX:
        raise ParseError(f"unknown command kind {kind!r}")
    kwargs = {}
    for item in fields[3:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"operand {item!r} is not key=value")
        try:
            if key in _TUPLE_FIELDS:
                kwargs[key] = _parse_tuple(value)
            elif key in _INT_FIELDS:
                kwargs[key] = int(value)
            else:
                raise ParseError(f"unknown operand key {key!r}")
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {value!r}") from exc
    return seq, PimcCommand(kind, bank, **kwargs)


def write_trace(stream: Iterable[PimcCommand], fh) -> int:
    n = 0
    for seq, cmd in enumerate(stream):
        fh.write(format_command(seq, cmd))
        fh.write("\n")
        n += 1
    return n


def read_trace(fh) -> CommandStream:
    cmds = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        seq, cmd = parse_command(line)
        if seq != len(cmds):
            raise ParseError(f"trace sequence gap: expected {len(cmds)}, got {seq}", lineno)
        cmds.append(cmd)
    return CommandStream(cmds)
