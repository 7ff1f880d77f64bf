"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see io_cli): input/format problems
exit 2, numerical failures exit 3, runtime invariant violations exit 4.
"""

from __future__ import annotations


class RidgeRiskError(Exception):
    """Base class for all package errors."""


class InputError(RidgeRiskError):
    """Invalid argument, malformed file, or unsatisfied precondition."""


class NumericalError(RidgeRiskError):
    """A numerical routine failed to converge or produced non-finite output."""


class InvariantError(RidgeRiskError):
    """A documented invariant was violated at runtime."""
