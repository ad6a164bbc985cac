"""Shape inference: resolves padding, pooling windows and flatten widths."""

from dataclasses import dataclass
from typing import Optional, Tuple

from ..errors import ValidationError
from .topology import ConvLayer, FcLayer, FlattenLayer, NetworkSpec, PoolLayer


@dataclass(frozen=True)
class Stage:
    index: int                 # position in ``net.layers``
    kind: str                  # conv | pool | flatten | fc
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]
    kernel: int = 0
    padding: int = 0
    window: int = 0
    pad_to: int = 0            # flatten only: zero-padded width

    @property
    def n_out(self) -> int:
        n = 1
        for d in self.out_shape:
            n *= d
        return n

    @property
    def fan_in(self) -> int:
        if self.kind == "conv":
            return self.kernel * self.kernel * self.in_shape[2]
        if self.kind == "fc":
            return self.in_shape[0]
        return 0

    @property
    def weight_shape(self) -> Optional[Tuple[int, ...]]:
        if self.kind == "conv":
            return (self.out_shape[2], self.kernel, self.kernel, self.in_shape[2])
        if self.kind == "fc":
            return (self.out_shape[0], self.in_shape[0])
        return None

    @property
    def weight_name(self) -> Optional[str]:
        return f"layer{self.index}.weight" if self.kind in ("conv", "fc") else None

    @property
    def layer_class(self) -> str:
        """``fc`` for the classifier, ``conv`` for the feature extractor (pooling included)."""
        return "fc" if self.kind == "fc" else "conv"


def _size(shape):
    n = 1
    for d in shape:
        n *= d
    return n


def _trace(net: NetworkSpec, same: bool, pool_window: int, pad_flatten: bool):
    if net.input_shape is None:
        raise ValidationError("network needs an input shape")
    shape = tuple(net.input_shape)
    stages = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvLayer):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: conv needs an (H, W, C) input, got {shape}")
            h, w, c = shape
            k = layer.kernel
            pad = k // 2 if same else 0
            oh, ow = h + 2 * pad - k + 1, w + 2 * pad - k + 1
            if oh <= 0 or ow <= 0:
                raise ValidationError(f"layer {i}: {k}x{k} kernel does not fit a {h}x{w} input")
            out = (oh, ow, layer.channels)
            stages.append(Stage(i, "conv", shape, out, kernel=k, padding=pad))
        elif isinstance(layer, PoolLayer):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: pool needs an (H, W, C) input, got {shape}")
            win = layer.window or pool_window
            h, w, c = shape
            if h < win or w < win:
                raise ValidationError(f"layer {i}: {win}x{win} pool does not fit a {h}x{w} input")
            out = (h // win, w // win, c)
            stages.append(Stage(i, "pool", shape, out, window=win))
        elif isinstance(layer, FlattenLayer):
            n = _size(shape)
            if n != layer.width and not (pad_flatten and n < layer.width):
                raise ValidationError(
                    f"layer {i}: previous layers produce {n} values, flatten width is {layer.width}")
            stages.append(Stage(i, "flatten", shape, (layer.width,), pad_to=layer.width))
        elif isinstance(layer, FcLayer):
            if len(shape) != 1:
                n = _size(shape)
                shape = (n,)
            stages.append(Stage(i, "fc", shape, (layer.width,)))
        else:
            raise ValidationError(f"unknown layer {layer!r}")
        shape = stages[-1].out_shape
    return stages


def resolve_shapes(net: NetworkSpec, conv_padding: str = "auto", pool_window: int = 2):
    """Per-layer :class:`Stage` list.

    ``conv_padding="auto"`` tries unpadded convolutions, then size-preserving
    ones, and keeps whichever reproduces the declared flatten width; if
    neither does, unpadded convolutions are used and the flattened vector is
    zero-padded up to the declared width.
    """
    if conv_padding not in ("valid", "same", "auto"):
        raise ValidationError(f"unknown conv padding {conv_padding!r}")
    if conv_padding != "auto":
        return _trace(net, conv_padding == "same", pool_window, pad_flatten=True)
    for same in (False, True):
        try:
            return _trace(net, same, pool_window, pad_flatten=False)
        except ValidationError:
            continue
    return _trace(net, False, pool_window, pad_flatten=True)


def output_shape(stages, net: NetworkSpec):
    return stages[-1].out_shape if stages else tuple(net.input_shape or ())
