"""Exception hierarchy shared by every module.

The CLI maps :class:`InputError` to exit code 1 and :class:`NumericalError`
to exit code 2.
"""


class LocbenchError(Exception):
    """Base class for all toolkit errors."""


class InputError(LocbenchError, ValueError):
    """Bad arguments, malformed files or data outside a valid span."""


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class FormatError(ParseError):
    """File parsed, but violates a structural rule (ordering, duplicates, empty)."""


class OutOfRangeError(InputError):
    """A query time falls outside the covered interval ``[lo, hi]``."""

    def __init__(self, value, lo, hi, what="time"):
        self.value = value
        self.interval = (lo, hi)
        super().__init__(f"{what} {value!r} outside valid interval [{lo!r}, {hi!r}]")


class CalibrationError(InputError):
    pass


class NumericalError(LocbenchError, ArithmeticError):
    """Computation is undefined for the given (otherwise well-formed) data."""


class DegeneracyError(NumericalError):
    """Rank-deficient geometry or a singular covariance."""


class DegenerateSignalError(NumericalError):
    """Signal variance too small for a normalized correlation."""


class NoValidWindowsError(NumericalError):
    pass
