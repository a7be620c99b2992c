"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PPGFError`.
The three families map onto the CLI exit codes: configuration problems (1),
data problems (2) and numeric divergence (3).
"""


class PPGFError(Exception):
    pass


class ConfigError(PPGFError):
    pass


class DataError(PPGFError):
    pass


class MissingFile(DataError):
    pass


class EmptyFile(DataError):
    pass


class UnknownColumn(DataError):
    pass


class NonNumericValue(DataError):
    pass


class NonFiniteValue(DataError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptySplit(DataError):
    pass


class SplitFractionError(DataError):
    pass


class ZeroVariance(DataError):
    pass


class KTooSmall(DataError):
    pass


class TooFewValues(DataError):
    pass


class ZeroWidthInterval(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class GroupOutOfRange(DataError):
    pass


class ShapeError(PPGFError, ValueError):
    pass


class NumericError(PPGFError):
    pass


class NonFiniteError(NumericError):
    """An operation produced (or was fed) NaN or inf."""


class BackwardError(NumericError):
    pass


class Divergence(NumericError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class CheckpointError(PPGFError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    pass


class SchemeMismatch(PPGFError):
    pass


class ConsistencyViolation(PPGFError):
    pass
