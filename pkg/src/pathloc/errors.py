"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PathLocError(Exception):
    exit_code = 3


class ValidationError(PathLocError, ValueError):
    """Bad input: malformed files, inconsistent shapes, invalid parameters."""

    exit_code = 2


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(PathLocError, ArithmeticError):
    """A computation could not produce a meaningful value."""

    exit_code = 3


class UnreachableError(NumericError):
    """Two nodes or clusters are in different connected components."""

    def __init__(self, a, b, what="nodes"):
        self.a, self.b = a, b
        super().__init__(f"{what} {a} and {b} are disconnected")


class BudgetError(PathLocError):
    """An enumeration or resource budget was exceeded."""

    exit_code = 4
