"""Exception types shared across the package."""


class SscsrError(Exception):
    """Base class for all package errors."""


class ConfigError(SscsrError, ValueError):
    """Invalid configuration or out-of-range parameter."""


class ShapeError(SscsrError, ValueError):
    """Array shapes or class counts do not line up."""


class DegenerateInputError(SscsrError, ValueError):
    """Input is well-formed but carries no usable information (empty, zero power)."""


class FormatError(SscsrError):
    """Malformed binary file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDivergence(SscsrError, RuntimeError):
    """Loss became non-finite during training."""
