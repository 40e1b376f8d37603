"""Exception types shared across the package.

Each maps onto one CLI exit code (see :mod:`uwacm.cli`).
"""


class InvalidArgument(ValueError):
    """A precondition on an argument or configuration value was violated."""


class FormatError(ValueError):
    """A dataset or checkpoint file is malformed.

    ``offset`` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ArithmeticError):
    """A computation produced a non-finite value or hit a singular system."""
