"""Exception types shared across the package."""


class SdprelaxError(Exception):
    """Base class for all package-specific errors."""


class NonFinite(SdprelaxError):
    """Input contains NaN or Inf."""


class ShapeMismatch(SdprelaxError):
    """Array dimensions do not conform."""


class CornerMismatch(SdprelaxError):
    """Homogenization corner entry Y[0,0] differs from 1 beyond tolerance."""


class NotPsd(SdprelaxError):
    """Matrix has an eigenvalue below the negative tolerance."""


class InvalidInstance(SdprelaxError):
    """Problem data violates a hard invariant; carries the validation report."""

    def __init__(self, report):
        super().__init__("; ".join(report) if isinstance(report, (list, tuple)) else report)
        self.report = list(report) if isinstance(report, (list, tuple)) else [report]


class EmptyBinarySet(SdprelaxError):
    """Transform requires at least one binary variable."""


class InvalidSparsity(SdprelaxError):
    """Cardinality bound outside (0, n]."""


class NotStrengthened(SdprelaxError):
    """Instance lacks the unit bound rows required by this reformulation."""


class Infeasible(SdprelaxError):
    """No feasible point found within the attempt budget."""


class SingularSystem(SdprelaxError):
    """Constraint-gradient Gram matrix is numerically singular (LICQ failure)."""

    def __init__(self, msg="singular tangent system", cond=None):
        super().__init__(msg)
        self.cond = cond


class RetractionFailed(SdprelaxError):
    """Fixed-point retraction did not reach tolerance within the iteration cap."""


class DescentViolated(SdprelaxError):
    """Projected-gradient step failed to decrease the objective after step halving."""


class LeastSquaresSingular(SdprelaxError):
    """Dual-recovery least-squares system is singular even after jitter."""


class SsnError(SdprelaxError):
    """Base class for semismooth-Newton failures; carries the iteration report."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class MaxNewtonIters(SsnError):
    """Semismooth Newton hit its iteration cap before reaching tolerance."""


class CGBreakdown(SsnError):
    """Conjugate gradient met non-positive curvature after jitter restarts."""


class SubproblemStalled(SdprelaxError):
    """Repeated low-rank + lifting failures without residual progress."""


class TooLarge(SdprelaxError):
    """Problem exceeds the enumeration/oracle size guard."""


class NoConvergence(SdprelaxError):
    """Iterative oracle did not converge within its cap."""


class ParseError(SdprelaxError):
    """Malformed input file; message carries the line number."""


class DuplicateEntry(ParseError):
    """Repeated matrix entry in a triplet file."""


class SizeMismatch(SdprelaxError):
    """Declared sizes are inconsistent with the data."""
