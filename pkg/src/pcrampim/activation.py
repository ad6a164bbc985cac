"""Binary-domain activation and pooling blocks (8-bit)."""

from .errors import ValidationError


def relu8(x: int) -> int:
    if x <= 0:
        return 0
    return 255 if x > 255 else int(x)


def maxpool(window, arity=None) -> int:
    window = list(window)
    if arity is None:
        arity = len(window)
    if arity not in (4, 9):
        raise ValidationError(f"unsupported pooling arity {arity}; expected 4 or 9")
    if len(window) != arity:
        raise ValidationError(f"pooling window has {len(window)} values, arity is {arity}")
    return int(max(window))
