"""Exception types shared across the package."""


class EpiOrmError(Exception):
    """Base class for all package errors."""


class ViewRangeError(EpiOrmError, IndexError):
    """A view, row or column index fell outside the light field."""


class ShapeError(EpiOrmError, ValueError):
    """Tensor or array shapes are incompatible with an operation."""


class BorderError(EpiOrmError, ValueError):
    """A patch window exceeded the EPI under the ``reject`` border policy."""


class ArgumentError(EpiOrmError, ValueError):
    """An argument is outside its documented domain."""


class FormatError(EpiOrmError, ValueError):
    """A file could not be parsed; ``offset`` is the byte position, if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DatasetError(EpiOrmError):
    """A benchmark-layout directory is incomplete or inconsistent."""


class TrainingError(EpiOrmError, RuntimeError):
    """Training diverged (non-finite loss)."""
