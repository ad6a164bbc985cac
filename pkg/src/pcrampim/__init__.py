"""Transaction-level simulator of a PCRAM stochastic-computing PIM accelerator."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AddressError,
    ConfigError,
    ConstraintError,
    ParseError,
    PlacementError,
    SchedulingError,
    SimError,
    TensorFormatError,
    ValidationError,
)

__all__ = [
    "__version__",
    "AddressError",
    "ConfigError",
    "ConstraintError",
    "ParseError",
    "PlacementError",
    "SchedulingError",
    "SimError",
    "TensorFormatError",
    "ValidationError",
]
