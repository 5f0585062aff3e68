"""Exception types shared across the library.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError/FormatError -> 3, NumericalError -> 4.
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes (or an invalid rank/channel count)."""


class FormatError(Exception):
    """A binary file does not conform to its on-disk format.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(Exception):
    """Dataset-level problem: missing files, manifest mismatch, bad images."""


class ConfigError(Exception):
    """Invalid configuration: unknown keys, unparseable values, bad combinations."""


class NumericalError(Exception):
    """Training or inference produced non-finite values."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""
