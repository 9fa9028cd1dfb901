"""Exception hierarchy shared by all modules."""


class InvalidInputError(ValueError):
    """Malformed argument: wrong length, out-of-range count, negative magnitude."""


class InfeasibleEnergyError(InvalidInputError):
    """Residual energy exceeds what the magnitude ceiling allows."""


class InvalidPairError(InvalidInputError):
    """Two compressed objects that cannot be compared (basis or length mismatch)."""


class PreconditionError(RuntimeError):
    """An internal routine was called outside its documented regime."""


class ConvergenceError(RuntimeError):
    """An iterative routine ran out of iterations."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class FormatError(ValueError):
    """Base class for binary database parse failures."""


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class ConsistencyError(FormatError):
    """A record whose stored energy fields disagree with its coefficients."""
