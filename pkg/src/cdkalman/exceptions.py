"""Exception hierarchy shared across the package.

``NumericalBreakdown`` subclasses signal that a filtering run has failed
numerically (indefinite covariance, infeasible hyperbolic rotation, blown-up
integration).  The benchmark layer catches exactly this family and records
the run as failed instead of aborting.  Everything else is a plain usage
error and derives from ``ValueError``.
"""


class NumericalBreakdown(Exception):
    """A numerical operation failed in a way that means filter breakdown."""


class NotPositiveDefinite(NumericalBreakdown):
    """A Cholesky pivot was non-positive."""


class SingularTriangular(NumericalBreakdown):
    """A triangular solve hit a zero diagonal entry."""


class HyperbolicBreakdown(NumericalBreakdown):
    """A hyperbolic rotation would need |pivot| <= |entry to eliminate|.

    The implicit Gram matrix is numerically indefinite.
    """


class StepSizeUnderflow(NumericalBreakdown):
    """The adaptive integrator pushed the step below its floor."""


class NonFiniteState(NumericalBreakdown):
    """A NaN or infinity appeared in a propagated quantity."""


class DegenerateGeometry(NumericalBreakdown):
    """A measurement function was evaluated at a singular geometry."""


class DimensionMismatch(ValueError):
    """Operand shapes do not conform."""


class LengthMismatch(ValueError):
    """A flat vector or sequence has the wrong length."""


class InvalidDimension(ValueError):
    """A rule or model was requested for an unsupported dimension."""


class DegenerateScaling(ValueError):
    """Sigma-point scaling parameters make n + lambda <= 0."""


class ConfigError(ValueError):
    """Invalid benchmark/CLI configuration."""
