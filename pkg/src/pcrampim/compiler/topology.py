"""Topology strings: ``conv5x5-pool-784-70-10`` and friends.

Grammar (tokens separated by ``-``)::

    token   := conv | pool | integer
    conv    := ("conv" | "con") K "x" C        K x K kernel, C output channels
    pool    := "pool" ["2" | "3"]              2x2 (4:1) or 3x3 (9:1) max pool
    integer := digits                          first one is the flatten width,
                                               the rest are fully connected widths

Whitespace inside conv tokens is ignored and several conv tokens may share
one ``-`` chunk (``conv3x128 conv3x128``), because published topology lists
are often typed that way.  A trailing parenthesised note is dropped.
"""

import re
from dataclasses import dataclass, field
from typing import Optional, Tuple

from ..errors import ParseError, ValidationError


@dataclass(frozen=True)
class ConvLayer:
    kernel: int
    channels: int
    kind = "conv"

    def __post_init__(self):
        if self.kernel <= 0 or self.channels <= 0:
            raise ValidationError("conv kernel size and channel count must be positive")
        if self.kernel % 2 == 0:
            raise ValidationError(f"conv kernel size must be odd, got {self.kernel}")

    def render(self):
        return f"conv{self.kernel}x{self.channels}"


@dataclass(frozen=True)
class PoolLayer:
    window: Optional[int] = None   # None: use the configured default
    kind = "pool"

    def __post_init__(self):
        if self.window not in (None, 2, 3):
            raise ValidationError(f"pool window must be 2 or 3, got {self.window}")

    def render(self):
        return "pool" if self.window is None else f"pool{self.window}"


@dataclass(frozen=True)
class FlattenLayer:
    width: int
    kind = "flatten"

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError("flatten width must be positive")

    def render(self):
        return str(self.width)


@dataclass(frozen=True)
class FcLayer:
    width: int
    kind = "fc"

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError("fully connected width must be positive")

    def render(self):
        return str(self.width)


@dataclass(frozen=True)
class NetworkSpec:
    layers: Tuple = ()
    input_shape: Optional[Tuple[int, ...]] = None
    weights: Optional[dict] = field(default=None, compare=False, repr=False)

    @property
    def flatten_width(self):
        for layer in self.layers:
            if isinstance(layer, FlattenLayer):
                return layer.width
        return None

    def with_weights(self, weights) -> "NetworkSpec":
        return NetworkSpec(self.layers, self.input_shape, weights)

    def with_input_shape(self, shape) -> "NetworkSpec":
        return NetworkSpec(self.layers, tuple(shape), self.weights)

    def count(self, kind):
        return sum(1 for layer in self.layers if layer.kind == kind)


_TOKEN = re.compile(r"conv?(\d+)x(\d+)|pool([23]?)")
_NOTE = re.compile(r"\s*\([^()]*\)\s*$")


def _scan_chunk(chunk, pos):
    squeezed = re.sub(r"\s+", "", chunk)
    if not squeezed:
        raise ParseError("empty token", pos)
    if squeezed.isdigit():
        if re.search(r"\d\s+\d", chunk):
            raise ParseError(f"whitespace inside integer {chunk.strip()!r}", pos)
        return [int(squeezed)]
    out = []
    i = 0
    while i < len(squeezed):
        m = _TOKEN.match(squeezed, i)
        if not m:
            raise ParseError(f"malformed token {chunk.strip()!r}", pos)
        if m.group(1) is not None:
            out.append(ConvLayer(int(m.group(1)), int(m.group(2))))
        else:
            out.append(PoolLayer(int(m.group(3)) if m.group(3) else None))
        i = m.end()
    return out


def parse_topology(text: str, input_shape=None) -> NetworkSpec:
    """Parse a topology string into a :class:`NetworkSpec` with unbound weights."""
    if text is None or not text.strip():
        raise ParseError("empty topology", 0)
    text = _NOTE.sub("", text)
    layers = []
    seen_int = False
    pos = 0
    for chunk in text.split("-"):
        for item in _scan_chunk(chunk, pos):
            if isinstance(item, int):
                if item == 0:
                    raise ValidationError(f"zero width at position {pos}")
                layers.append(FcLayer(item) if seen_int else FlattenLayer(item))
                seen_int = True
            elif seen_int:
                raise ParseError(f"{item.render()} after fully connected layers", pos)
            else:
                layers.append(item)
        pos += len(chunk) + 1
    if input_shape is None and layers and isinstance(layers[0], FlattenLayer):
        input_shape = (layers[0].width,)
    return NetworkSpec(tuple(layers), None if input_shape is None else tuple(input_shape))


def render_topology(net) -> str:
    layers = net.layers if isinstance(net, NetworkSpec) else net
    return "-".join(layer.render() for layer in layers)


@dataclass(frozen=True)
class Benchmark:
    name: str
    topology: str
    input_shape: tuple
    dataset: str
    # published per-class figures: memory in Gb (1e9 bits), reads/writes in millions
    targets: dict
    accuracy_pct: float

    def network(self) -> NetworkSpec:
        return parse_topology(self.topology, self.input_shape)


BENCHMARKS = {
    "CNN1": Benchmark(
        "CNN1", "conv5x5-pool-784-70-10", (28, 28, 1), "MNIST",
        {"fc": {"memory_gb": 0.00095, "reads_m": 1.22, "writes_m": 1.226},
         "conv": {"memory_gb": 0.0002, "reads_m": 0.62, "writes_m": 0.32}}, 97.45),
    "CNN2": Benchmark(
        "CNN2", "conv7x10-pool-1210-120-10", (28, 28, 1), "MNIST",
        {"fc": {"memory_gb": 0.00098, "reads_m": 1.254, "writes_m": 1.257},
         "conv": {"memory_gb": 0.00026, "reads_m": 0.67, "writes_m": 0.34}}, 97.21),
    "VGG1": Benchmark(
        "VGG1",
        "conv3x64-conv3x64-pool-conv3x128 conv3x128-pool-conv3x256-conv3x256-conv3 x 256-pool-"
        "conv3 x512-conv3x512-pool-conv3 x512-conv3x512 conv3x512-pool-25088-4096-4096-1000",
        (224, 224, 3), "ImageNet",
        {"fc": {"memory_gb": 1.93, "reads_m": 247, "writes_m": 248},
         "conv": {"memory_gb": 0.229, "reads_m": 58.8, "writes_m": 30.3}}, 89.5),
    "VGG2": Benchmark(
        "VGG2",
        "conv3x64-conv3x64-pool-conv3x128 conv3x128-pool-conv3x256-conv3x256-conv3x256-conv1 x 512-"
        "pool-conv3x512-conv3x512-conv3x512-con1 x512-pool-conv3x512-conv3x512-conv3x512-con1x 512-"
        "pool-25088-4096-4096-1000",
        (224, 224, 3), "ImageNet",
        {"fc": {"memory_gb": 1.96, "reads_m": 251, "writes_m": 252},
         "conv": {"memory_gb": 0.234, "reads_m": 60.01, "writes_m": 30.9}}, 88.51),
}


def resolve_topology(text: str, input_shape=None) -> NetworkSpec:
    """Accept a benchmark name (``CNN1`` ...) or a topology string."""
    bench = BENCHMARKS.get(text.strip().upper()) if text else None
    if bench is not None:
        return parse_topology(bench.topology, input_shape or bench.input_shape)
    return parse_topology(text, input_shape)
