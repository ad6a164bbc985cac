"""Topology parsing, shape inference, lowering and the analytic count model."""

from .counting import CountReport, count_model
from .lowering import LoweredNetwork, Lowerer, lower
from .shapes import Stage, resolve_shapes
from .topology import (
    BENCHMARKS,
    ConvLayer,
    FcLayer,
    FlattenLayer,
    NetworkSpec,
    PoolLayer,
    parse_topology,
    render_topology,
    resolve_topology,
)
from .weights import bind_weights, expected_weights, random_input, random_weights

__all__ = [
    "BENCHMARKS", "ConvLayer", "CountReport", "FcLayer", "FlattenLayer", "LoweredNetwork",
    "Lowerer", "NetworkSpec", "PoolLayer", "Stage", "bind_weights", "count_model",
    "expected_weights", "lower", "parse_topology", "random_input", "random_weights",
    "render_topology", "resolve_shapes", "resolve_topology",
]
