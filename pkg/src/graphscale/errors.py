"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input, CLI exit
status 1) and :class:`NumericError` (the numbers did not cooperate, exit 2).
"""


class GraphScaleError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GraphScaleError, ValueError):
    """Input failed a schema, domain or precondition check."""


class NumericError(GraphScaleError, ArithmeticError):
    """A numerical procedure could not produce a usable answer."""


class DomainError(ValidationError):
    """A scale input or parameter lies outside the form's domain."""


class TooFewRecords(ValidationError):
    pass


class MetricFormMismatch(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    def __init__(self, class_label, size):
        self.class_label = class_label
        self.size = size
        super().__init__(f"class {class_label!r} has {size} graph(s); at least 2 are required")


class AllZeroEdges(ValidationError):
    def __init__(self, class_label):
        self.class_label = class_label
        super().__init__(f"class {class_label!r} has zero total edges")


class TooFewEpochs(ValidationError):
    pass


class TooFewCurves(ValidationError):
    pass


class AllStartsDiverged(NumericError):
    pass


class InsufficientBootstrapSuccess(NumericError):
    pass


class RefusesUnconverged(NumericError):
    pass


class RowError(ValidationError):
    """Parse failure tied to a location in a CSV file.

    ``row`` is the 1-based line number in the file (the header is line 1).
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class MissingColumn(RowError):
    pass


class UnknownColumn(RowError):
    pass


class BadEnum(RowError):
    pass


class DomainViolation(RowError):
    pass


class NonIncreasingEpochs(RowError):
    pass
