"""Exception hierarchy shared by every module in the package."""


class SymCorrError(Exception):
    """Base class for all errors raised by symcorr."""


class ShapeError(SymCorrError, ValueError):
    """Operand shapes are incompatible."""


class DegenerateRowError(SymCorrError, ValueError):
    """A row is too close to zero to be unit-normalized."""

    def __init__(self, row, norm=None):
        self.row = int(row)
        self.norm = norm
        msg = f"row {self.row} has near-zero L2 norm"
        if norm is not None:
            msg += f" ({norm:.3e})"
        super().__init__(msg)


class ContractError(SymCorrError, ValueError):
    """A documented precondition was violated."""


class ConfigurationError(SymCorrError, ValueError):
    pass


class EvaluationError(SymCorrError, ArithmeticError):
    """A function under evaluation returned a non-finite value."""


class TrainingError(SymCorrError, ArithmeticError):
    """Training hit a non-finite loss."""

    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at step {step}; aborting")


class FormatError(SymCorrError, ValueError):
    """A feature or mask file is malformed."""

    def __init__(self, message, offset):
        self.offset = int(offset)
        super().__init__(f"{message} (byte offset {self.offset})")
