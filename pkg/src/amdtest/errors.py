"""Exception types raised across the package."""


class AMDError(Exception):
    """Base class for all package errors."""


class InputError(AMDError, ValueError):
    """Malformed input: shape or dimension mismatch, bad config value."""


class DegenerateDataError(AMDError, ValueError):
    """Data for which a quantity is undefined (e.g. all points coincide)."""


class NumericError(AMDError, ArithmeticError):
    """A non-finite value appeared during computation."""


class UnsupportedSpecError(AMDError, TypeError):
    """A distribution spec not handled by the requested operation."""


class HarnessError(AMDError, RuntimeError):
    """Too many failed trials in a Monte Carlo run."""
