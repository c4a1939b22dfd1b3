"""Exception hierarchy shared by all fifaudit modules."""


class FifauditError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(FifauditError):
    """Schema is malformed or inconsistent with the data it describes."""


class DataError(FifauditError):
    """A data file or record violates the dataset contract.

    Carries optional row/column context so CLI users can locate the
    offending cell.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class GroupError(FifauditError):
    """A sensitive group required by an operation is absent or unusable."""


class TrainingError(FifauditError):
    """A trainable classifier's preconditions are violated."""


class FitError(FifauditError):
    """A spline system could not be solved (singular without ridge)."""


class MetricError(FifauditError):
    """A fairness metric is undefined on the given inputs."""


class OracleError(FifauditError):
    """A brute-force oracle rejected its input (e.g. non-product table)."""
