"""Exception types shared across the package.

Every error raised on purpose by this package derives from FactoryError, so
callers can catch one type at the boundary.  Domain errors additionally derive
from ValueError to keep stdlib-style handling working.
"""

from __future__ import annotations

__all__ = [
    "FactoryError",
    "DomainError",
    "WindowError",
    "SchemeValidationError",
    "CertificationError",
    "TruncationCapError",
    "ReplayExhaustedError",
    "TableFormatError",
    "DivergenceError",
]


class FactoryError(Exception):
    """Base class for all package errors."""


class DomainError(FactoryError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class WindowError(DomainError):
    """A coefficient row index lies outside a scheme's certified window."""


class SchemeValidationError(FactoryError):
    """A coefficient scheme failed its consistency validation."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class CertificationError(FactoryError):
    """An operation needs a certificate the scheme does not carry.

    Raised e.g. when asking for a factory coin from a scheme that does not
    certify the estimator stays in [0, 1].
    """


class TruncationCapError(FactoryError):
    """The truncation-index draw walked past the hard cap.

    Carries enough context to diagnose a too-heavy tail configuration.
    """

    def __init__(self, u: float, cap: int, cdf_at_cap: float):
        super().__init__(
            f"index draw exceeded the hard cap {cap} "
            f"(uniform {u!r}, cdf at cap {cdf_at_cap!r})"
        )
        self.u = u
        self.cap = cap
        self.cdf_at_cap = cdf_at_cap


class ReplayExhaustedError(FactoryError):
    """A replayed coin stream ran out of recorded coins."""


class TableFormatError(FactoryError, ValueError):
    """A coefficient table file is malformed."""


class DivergenceError(FactoryError):
    """A series bound required by an oracle does not converge."""
