"""Exception hierarchy shared by all modules."""


class ItoStratError(Exception):
    """Base class for library errors."""


class DimensionError(ItoStratError, ValueError):
    """Incompatible domain/range dimensions, axis indices or batch shapes."""


class CutoffMismatchError(DimensionError):
    """Fields with different spectral cutoffs were combined."""


class InvariantError(ItoStratError):
    """A structural invariant (reality, divergence-free, ...) is violated."""


class NonFiniteError(ItoStratError, FloatingPointError):
    """A NaN or infinity appeared during evaluation.

    ``mode`` and ``step`` locate the offending summand or time step when known.
    """

    def __init__(self, message, *, mode=None, step=None):
        super().__init__(message)
        self.mode = mode
        self.step = step


class ConfigError(ItoStratError, ValueError):
    """Invalid or unresolvable experiment configuration."""
