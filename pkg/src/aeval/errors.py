"""Shared exception types."""


class AevalError(Exception):
    """Base class for all errors raised by this package."""


class DataError(AevalError):
    """Invalid input data: malformed files, shape mismatches, bad values.

    The CLI maps this to exit code 2.
    """
