"""Row map of the compute partition, shared by the compiler and the runtime.

Row 0 is never written and serves as the zero stream.  Rows ``1..2L`` hold the
per-level select pairs.  Activation and weight operands of one 32-input chunk
are interleaved (``64 + 2t`` / ``65 + 2t``) so every multiply pairs rows one
apart.  A neuron lane ``l`` always works in block column ``l``.
"""

from dataclasses import dataclass

POS, NEG = 0, 1
CHUNK = 32
CHUNK_DEPTH = 5


@dataclass(frozen=True)
class ComputeLayout:
    select_levels: int = 16

    def __post_init__(self):
        if not 1 <= self.select_levels <= 31:
            raise ValueError("select_levels must be in 1..31")

    zero_row = 0
    act_base = 64
    pending_base = 128

    def select_row(self, level: int) -> int:
        return 2 * level - 1

    def select_complement_row(self, level: int) -> int:
        return 2 * level

    def act_row(self, t: int) -> int:
        return self.act_base + 2 * t

    def weight_row(self, t: int) -> int:
        return self.act_base + 2 * t + 1

    def is_act_row(self, row: int) -> bool:
        return self.act_base <= row < self.act_base + 2 * CHUNK and row % 2 == 0

    def rotation(self, row: int, stride: int, select_offset: int) -> int:
        """Rotation of an operand written into ``row``.

        Activation rows share ``select_offset`` so the MUX selects stratify
        activation ranks; every other row uses ``row * stride``.
        """
        if self.is_act_row(row):
            return select_offset % 256
        return (row * stride) % 256

    def pending_row(self, sign: int, level: int) -> int:
        return self.pending_base + 2 * (sign * (self.select_levels + 1) + level)

    def temp_row(self, sign: int, level: int) -> int:
        return self.pending_row(sign, level) + 1

    def accum_row(self, sign: int) -> int:
        return self.pending_base + 4 * (self.select_levels + 1) + sign

    @property
    def rows_required(self) -> int:
        return self.accum_row(NEG) + 1


DEFAULT_LAYOUT = ComputeLayout()
