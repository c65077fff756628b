import warnings
from typing import Optional, Sequence

from relic.core.errors import MismatchError, RelicToolError


class RobustLogitError(RelicToolError):
    pass


class ConfigError(RobustLogitError):
    def __init__(self, field: str, value: object, requirement: str) -> None:
        super().__init__()
        self.field = field
        self.value = value
        self.requirement = requirement

    def __str__(self) -> str:
        return f"Invalid `{self.field}` ({self.value!r}); {self.requirement}!"


class DimensionMismatchError(MismatchError[int]):
    def __init__(
        self, name: str, received: Optional[int] = None, expected: Optional[int] = None
    ):
        super().__init__(name, received, expected)


class DataError(RobustLogitError):
    """
    The input data violates a dataset invariant (ragged rows, duplicate names, non-numeric cells, ...).
    """

    def __init__(
        self, message: str, row: Optional[object] = None, column: Optional[str] = None
    ) -> None:
        super().__init__()
        self.message = message
        self.row = row
        self.column = column

    def __str__(self) -> str:
        location = []
        if self.row is not None:
            location.append(f"row {self.row!r}")
        if self.column is not None:
            location.append(f"column {self.column!r}")
        if not location:
            return self.message
        return f"{self.message} (at {', '.join(location)})"


class ResponseError(RobustLogitError):
    def __init__(self, reason: str = "degenerate response") -> None:
        super().__init__()
        self.reason = reason

    def __str__(self) -> str:
        return self.reason


class PenaltyError(RobustLogitError):
    def __init__(self, reason: str = "no penalized coefficients") -> None:
        super().__init__()
        self.reason = reason

    def __str__(self) -> str:
        return self.reason


class InsufficientClassSizeError(RobustLogitError):
    def __init__(self, label: int, size: int, required: int) -> None:
        super().__init__()
        self.label = label
        self.size = size
        self.required = required

    def __str__(self) -> str:
        return f"insufficient class size; class {self.label} has {self.size} rows, at least {self.required} required"


class NoValidSubsetError(RobustLogitError):
    def __init__(self, attempted: int) -> None:
        super().__init__()
        self.attempted = attempted

    def __str__(self) -> str:
        return f"no valid initial subset ({self.attempted} attempted)"


class NumericalError(RobustLogitError):
    pass


class LabelParseError(DataError):
    def __init__(self, value: str, row: object, column: str) -> None:
        super().__init__(f"Unparseable clinical value {value!r}", row, column)
        self.value = value


class UnsupportedFormatError(RobustLogitError):
    def __init__(self, received: str, allowed: Sequence[str]) -> None:
        super().__init__()
        self.received = received
        self.allowed = list(allowed)

    def __str__(self) -> str:
        return f"Format `{self.received}` is not supported. Formats supported: `{self.allowed}`"


class ConstantColumnWarning(UserWarning):
    pass


def warn_constant_columns(names: Sequence[str]) -> None:
    warnings.warn(
        f"Zero-variance penalized columns forced to 0: {list(names)}",
        ConstantColumnWarning,
        stacklevel=3,
    )


__all__ = [
    "RobustLogitError",
    "ConfigError",
    "DimensionMismatchError",
    "DataError",
    "ResponseError",
    "PenaltyError",
    "InsufficientClassSizeError",
    "NoValidSubsetError",
    "NumericalError",
    "LabelParseError",
    "UnsupportedFormatError",
    "ConstantColumnWarning",
    "warn_constant_columns",
]
