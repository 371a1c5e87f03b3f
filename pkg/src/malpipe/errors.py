"""Exception hierarchy. Each family maps onto one CLI exit code."""


class MalpipeError(Exception):
    exit_code = 1


class ConfigError(MalpipeError, ValueError):
    exit_code = 2


class DataError(MalpipeError, ValueError):
    exit_code = 3


class ModelError(MalpipeError):
    exit_code = 4


class ParseError(DataError):
    """Base for input-file format violations; carries the 1-based data row and column."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class MalformedHeaderError(ParseError):
    pass


class NonNumericCellError(ParseError):
    pass


class LabelValueError(ParseError):
    pass


class RowLengthError(ParseError):
    pass


class EmptyDatasetError(DataError):
    pass


class StratificationError(DataError):
    pass


class DimensionMismatchError(DataError):
    def __init__(self, expected, found, what="feature count"):
        self.expected = expected
        self.found = found
        super().__init__(f"{what} mismatch: expected {expected}, found {found}")


class SingleClassError(DataError):
    pass


class NotFittedError(ModelError):
    pass


class CorruptBundleError(ModelError):
    pass
