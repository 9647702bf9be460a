"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericAbort -> 3.
"""


class TrustpredError(Exception):
    pass


class ConfigError(TrustpredError, ValueError):
    pass


class DataError(TrustpredError, ValueError):
    pass


class MissingPStarError(DataError):
    def __init__(self, detail: str = ""):
        msg = "TCP requires ground-truth-class probability"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class DatasetFormatError(DataError):
    """Malformed dataset file. ``offset`` is the byte position of the problem."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} at byte offset {offset}")
        self.offset = offset


class MagicError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    def __init__(self, expected: int, actual: int, offset: int):
        super().__init__(
            f"truncated file: expected {expected} bytes, got {actual}", offset
        )
        self.expected = expected
        self.actual = actual


class DimensionOverflowError(DatasetFormatError):
    pass


class UndefinedMetricError(TrustpredError, ValueError):
    pass


class NumericAbort(TrustpredError, ArithmeticError):
    """Non-finite loss or parameters during training."""

    def __init__(self, step: int, batch_index: int, epoch: int, what: str = "loss"):
        super().__init__(
            f"non-finite {what} at step {step} (epoch {epoch}, batch {batch_index})"
        )
        self.step = step
        self.batch_index = batch_index
        self.epoch = epoch
