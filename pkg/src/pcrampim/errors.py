"""Exception hierarchy.  ``category`` maps to the CLI exit code."""


class SimError(Exception):
    category = "internal"


class ParseError(SimError):
    category = "parse"

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ValidationError(SimError):
    category = "parse"


class ConfigError(SimError):
    category = "config"


class PlacementError(SimError):
    category = "placement"

    def __init__(self, message, required=None, available=None):
        if required is not None:
            message = f"{message}: requires {required} bytes, {available} available"
        super().__init__(message)
        self.required = required
        self.available = available


class SchedulingError(SimError):
    category = "scheduling"


class AddressError(SimError):
    category = "address"


class ConstraintError(SimError):
    category = "constraint"


class TensorFormatError(SimError):
    category = "io"


EXIT_CODES = {
    "parse": 2,
    "config": 3,
    "placement": 4,
    "io": 5,
    "scheduling": 6,
    "address": 7,
    "constraint": 7,
    "internal": 1,
}
