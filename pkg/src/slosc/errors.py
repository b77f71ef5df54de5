"""Exception hierarchy.

Error identifiers follow the library's documented contracts: problem-input
errors subclass ``ProblemError`` (CLI exit code 2), runtime numerical errors
subclass ``NumericalError`` (CLI exit code 3).
"""


class SloscError(Exception):
    """Base class for all library errors."""


class ProblemError(SloscError):
    """Invalid problem input (file format, grids, coefficient values)."""


class BadGrid(ProblemError):
    """Breakpoint grid is malformed (not increasing, wrong endpoints, ...)."""


class NonPositiveP(ProblemError):
    """The leading coefficient is not uniformly positive."""


class ZeroWeight(ProblemError):
    """The weight coefficient vanishes identically."""


class OutOfDomain(ProblemError):
    """Evaluation point lies outside [0, 1]."""


class ProblemFormatError(ProblemError):
    """Problem file does not match the documented JSON schema."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class NumericalError(SloscError):
    """A numerical routine failed to meet its contract."""


class StepFailure(NumericalError):
    """Adaptive integrator could not meet the local error tolerance."""


class PruferViolation(NumericalError):
    """Monotonicity of the phase angle was violated on an accepted step."""


class MeshMismatch(NumericalError):
    """Mesh is missing a required node (breakpoint, atom, or scan point)."""


class FactorizationBreakdown(NumericalError):
    """Symmetric factorization produced non-finite pivots."""


class NoPositivityFound(NumericalError):
    """Scan for a positivity point exhausted its search range."""


class NoSignChange(NumericalError):
    """Eigenvalue bracket does not exhibit a residual sign change."""
