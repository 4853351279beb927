"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
solver failures with 3.
"""

from __future__ import annotations


class SurveyELError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SurveyELError):
    """Invalid inputs: bad shapes, out-of-range values, malformed files."""


class SchemaError(ValidationError):
    """A required column is missing or a field cannot be parsed.

    Carries enough context (row, column) to locate the offending cell.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class SolverError(SurveyELError):
    """A numerical routine failed to produce a usable answer."""


class ConvergenceError(SolverError):
    """An iterative solver exhausted its iteration budget."""


class FeasibilityError(SolverError):
    """The constrained weight set is empty for the requested parameter.

    ``direction`` is a separating direction ``d`` such that ``d @ psi_i >= 0``
    for every observation (with strict inequality somewhere), certifying that
    zero is outside the convex hull of the estimating-function values.
    """

    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


class SingularModelError(SolverError):
    """A Jacobian or moment matrix required to be invertible is singular."""
