"""Exception hierarchy.

Each category maps to a distinct CLI exit code so that scripted sweeps can
tell a bad config from corrupt data or a diverged run.
"""


class SpikeAEError(Exception):
    exit_code = 1


class ConfigError(SpikeAEError, ValueError):
    exit_code = 2


class DataError(SpikeAEError):
    exit_code = 3


class NumericError(SpikeAEError, ArithmeticError):
    exit_code = 4


class FormatError(SpikeAEError):
    """Malformed binary input (IDX file, checkpoint)."""

    exit_code = 5

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConsistencyError(SpikeAEError):
    """Well-formed input whose parts disagree (counts, shapes, configs)."""

    exit_code = 5


class DimensionError(SpikeAEError, ValueError):
    exit_code = 1


class ContractError(SpikeAEError, ValueError):
    """Precondition of an operation violated by the caller."""

    exit_code = 1
