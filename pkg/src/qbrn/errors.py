"""Exception types shared across the package.

Every error raised on purpose derives from QbrnError so callers (and the
CLI exit-code mapping) can distinguish deliberate failures from bugs.
"""


class QbrnError(Exception):
    """Base class for all package errors."""


class DimensionError(QbrnError):
    """Operand shapes are incompatible."""


class DomainError(QbrnError):
    """A value lies outside the mathematical domain of an operation."""


class NumericalError(QbrnError):
    """A computation produced a non-finite or otherwise unusable value."""


class InvariantError(QbrnError):
    """A declared data invariant (simplex row, unit norm, ...) is violated."""


class RangeError(QbrnError):
    """An index or step count is out of its allowed range."""


class DataError(QbrnError):
    """Inputs are structurally valid but mutually inconsistent."""


class ConfigError(QbrnError):
    """A configuration value violates its constraints."""


class FormatError(QbrnError):
    """A binary or text container is malformed.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FixtureError(QbrnError):
    """A committed fixture file is missing or does not match its manifest."""
