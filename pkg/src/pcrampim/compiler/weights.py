"""Weight binding: shape checks and reproducible random weights."""

import numpy as np

from ..errors import ValidationError
from ..tensorio import SignedTensor
from .shapes import resolve_shapes


def expected_weights(net, conv_padding="auto", pool_window=2) -> dict:
    """``{tensor name: shape}`` for every conv / fc layer."""
    return {s.weight_name: s.weight_shape
            for s in resolve_shapes(net, conv_padding, pool_window) if s.weight_name}


def bind_weights(net, tensors: dict, conv_padding="auto", pool_window=2):
    want = expected_weights(net, conv_padding, pool_window)
    bound = {}
    for name, shape in want.items():
        t = tensors.get(name)
        if t is None:
            raise ValidationError(f"weights file lacks tensor {name!r}")
        if not isinstance(t, SignedTensor):
            t = SignedTensor.from_signed(t)
        if tuple(t.shape) != tuple(shape):
            raise ValidationError(f"tensor {name!r} has shape {t.shape}, expected {shape}")
        bound[name] = t
    extra = sorted(set(tensors) - set(want))
    if extra:
        raise ValidationError(f"unexpected tensors in weights file: {', '.join(extra)}")
    return net.with_weights(bound)


def random_weights(net, seed: int, max_magnitude: int = 255, negative_fraction: float = 0.5,
                   conv_padding="auto", pool_window=2) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in expected_weights(net, conv_padding, pool_window).items():
        mag = rng.integers(0, max_magnitude + 1, size=shape, dtype=np.int64)
        neg = rng.random(size=shape) < negative_fraction
        out[name] = SignedTensor(mag.astype(np.uint8), neg)
    return out


def random_input(shape, seed: int, max_value: int = 255) -> SignedTensor:
    rng = np.random.default_rng(seed)
    return SignedTensor.unsigned(rng.integers(0, max_value + 1, size=tuple(shape)))
