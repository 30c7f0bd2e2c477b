"""Exception types raised by the library."""


class QZRPError(Exception):
    """Base class for all errors raised by qzrp."""


class DomainError(QZRPError, ValueError):
    """An argument lies outside the domain where a series or formula converges."""


class ParameterRegimeError(QZRPError, ValueError):
    """Model parameters violate the positivity regime 0 < q, mu < 1 (or 0 < mu < lambda < 1)."""


class InsufficientCutoffError(QZRPError, RuntimeError):
    """The Fock-space cutoff could not be made large enough to converge."""


class ResourceLimitError(QZRPError, RuntimeError):
    """A sector or pattern is too large for the requested computation."""
