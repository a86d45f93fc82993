"""Exception hierarchy for obsgrass.

Every failure mode raised by the library derives from :class:`ObsGrassError`
so callers (and the CLI) can distinguish library-level contract violations
from programming errors.
"""


class ObsGrassError(Exception):
    """Base class for all obsgrass errors."""


class NonFiniteError(ObsGrassError):
    """A computation produced NaN or infinity (overflow, unstable recurrence)."""


class SingularStateError(ObsGrassError):
    """The continuous-time state matrix is singular and the exact
    discretization formula was requested."""


class SingularTransformError(ObsGrassError):
    """The similarity transform is numerically singular (condition number
    above threshold)."""


class NoUniqueSolutionError(ObsGrassError):
    """The Sylvester system is singular beyond tolerance; some eigenvalue
    product of the pair is too close to 1."""


class DimensionMismatchError(ObsGrassError):
    """Operands have inconsistent dimensions."""


class ShapeMismatchError(ObsGrassError):
    """Bundles or triples being compared disagree in shape."""


class DivisionNearOneError(ObsGrassError):
    """A closed-form Gram denominator 1 - a_i * a'_j is within epsilon of
    zero (near-resonant pole pair)."""


class UnknownSolverError(ObsGrassError):
    """Unrecognized solver name in the FLOPS model."""


class UnknownMetricError(ObsGrassError):
    """Unrecognized subspace-distance metric label."""


class RankDeficientError(ObsGrassError):
    """A truncated observability matrix lost column rank under tolerance."""


class IllConditionedGramError(ObsGrassError):
    """A self-Gram matrix is too ill-conditioned for the chordal trace form;
    the simplified distance is the intended fallback."""


class DegenerateTraceError(ObsGrassError):
    """A self-Gram trace underflowed to (numerically) zero."""


class InfiniteDistanceError(ObsGrassError):
    """The Martin distance diverges when any principal angle reaches pi/2."""


class InsufficientTasksError(ObsGrassError):
    """A continual-learning metric needs more tasks than were provided."""


class DegenerateKernelError(ObsGrassError):
    """A centered Gram matrix has (numerically) zero norm, so kernel
    alignment is undefined."""


class ConfigError(ObsGrassError):
    """Invalid run configuration (budgets, variants, file contents)."""


class BenchmarkAssertionError(ObsGrassError):
    """A benchmark's built-in performance assertion failed (e.g. the fast
    path was not faster by the required factor)."""
