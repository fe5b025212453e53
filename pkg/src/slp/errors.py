"""Exception types shared across the package."""


class SlpError(Exception):
    """Base class for all errors raised by :mod:`slp`."""


class InvalidInputError(SlpError, ValueError):
    """An argument is outside the domain of the operation."""


class DomainError(InvalidInputError):
    """A probability argument makes the requested quantity undefined.

    Raised for SEP requirements of exactly 0 or 1, which are unattainable
    (or vacuous) under Gaussian noise.
    """


class ChannelError(SlpError):
    """The channel matrix is rank deficient or has more users than antennas."""


class InfeasibleGainsError(SlpError):
    """Gain factors too small for the SEP bounds to admit any perturbation."""


class PreconditionError(SlpError):
    """A structural precondition of an identity does not hold."""


class SolverError(SlpError):
    """A solver returned without an optimal point."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(SlpError):
    """A fixed-point iteration did not converge within its budget."""
