"""Exception types shared across the solver stack."""


class BivortexError(Exception):
    """Base class for all library errors."""


class ConfigError(BivortexError):
    """Invalid run configuration (syntax or semantics)."""


class NonZeroMean(BivortexError):
    """Periodic Poisson right side fails the zero-mean solvability condition."""


class MaxIterExceeded(BivortexError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class LineSearchStalled(BivortexError):
    """Backtracking reduced the step below min_step without residual decrease."""


class MonotonicityViolated(BivortexError):
    """A sweep of the sub/supersolution scheme broke the pointwise ordering."""


class Infeasible(BivortexError):
    """Torus constraint values alpha/beta are not both positive."""


class Stalled(BivortexError):
    """Outer descent step collapsed while the residual is still above tolerance."""


class DiagnosticOverflow(BivortexError):
    """An exponent argument exceeded the overflow guard (> 700)."""
