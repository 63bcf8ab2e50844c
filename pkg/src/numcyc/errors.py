"""Exception hierarchy shared by every numcyc module.

All certified computations either return an enclosure that meets the
requested tolerance or raise one of these errors; they never silently
return a value whose error is unknown.
"""

from __future__ import annotations


class NumcycError(Exception):
    """Base class for all package errors."""


class PrecisionUnreachable(NumcycError):
    """Raised when the precision ladder hits its cap before the requested
    tolerance or a required strict separation is achieved."""


class CapExceeded(NumcycError):
    """Raised when a configured search/scan cap would be exceeded
    (for example a brute-force grid larger than the configured bound)."""


class ZeroVector(NumcycError):
    """Raised when a normalized pair is requested for the zero vector."""


class ConvergenceFailure(NumcycError):
    """Raised when an iterative solver fails to reach its tolerance."""


class DimensionMismatch(NumcycError):
    """Raised when operator, vector or functional dimensions disagree."""


class InvalidPrimes(NumcycError):
    """Raised when a prime pair violates the required growth inequality."""


class Unreachable(NumcycError):
    """Raised when a steering target cannot be reached within the stated
    budget (modulus out of range, perturbation budget too small, ...)."""


class ScheduleOverflow(NumcycError):
    """Raised when an exponent schedule would exceed the configured cap."""


class CalibrationFailure(NumcycError):
    """Raised when no certified calibration region can be produced."""


class OutOfCalibratedRegion(NumcycError):
    """Raised when solver inputs leave the certified calibration region."""


class SearchExhausted(NumcycError):
    """Raised when a bounded combinatorial search finds no admissible
    configuration."""


class EigensolveFailure(NumcycError):
    """Raised when eigenvalues of a matrix cannot be certified to the
    tolerance the classifier needs."""


class SingularConfiguration(NumcycError):
    """Raised when a Jacobian is singular at the requested point."""


class LeftRegion(NumcycError):
    """Raised when a continuation path leaves its region of validity."""


class SchemaError(NumcycError):
    """Raised on malformed, unknown-field or wrong-version documents."""
