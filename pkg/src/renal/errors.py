"""Exception hierarchy shared across the package."""


class RenalError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RenalError, ValueError):
    pass


class InsufficientDataError(RenalError, ValueError):
    pass


class DegenerateDataError(RenalError):
    """No bin configuration survives the selection filters."""


class DivergenceError(RenalError, ArithmeticError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class ThinningBoundError(RenalError, RuntimeError):
    """An intensity exceeded the thinning upper bound at a proposal."""


class DataFormatError(RenalError, ValueError):
    """Malformed or invalid input file."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where = f" ({where})"
        super().__init__(message + where)
