"""Exception hierarchy shared by all qacrystal modules."""


class QacError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(QacError, ValueError):
    """Invalid parameters, grids, or configuration files."""


class DomainError(QacError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(QacError):
    """An operation precondition (typically a criterion hypothesis) does not hold.

    Carries the two compared values when the precondition is an inequality.
    """

    def __init__(self, message, lhs=None, rhs=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs


class DegeneracyError(QacError):
    """Computed eigenvalues failed the strict-increase certification.

    Signals a too-coarse grid or too-small half-width, never a property of
    the exact operator (its spectrum is simple).
    """


class DefinitenessError(QacError):
    """A covariance that must be positive definite lost definiteness numerically."""


class ConvergenceError(QacError):
    """A numerical routine exceeded its resolution budget or failed a self-check."""
