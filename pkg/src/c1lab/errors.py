"""Exception hierarchy shared by all modules."""


class C1LabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(C1LabError):
    """A point, stencil or support lies outside the chart domain."""


class InvalidInputError(C1LabError, ValueError):
    """Arguments violate an operation's preconditions."""


class InvalidMetricError(C1LabError):
    """Metric is singular or does not have Lorentzian signature."""


class RegularityError(C1LabError):
    """Second derivatives were requested from a field that is only C^1."""


class CalibrationError(C1LabError):
    """Cone-correction calibration did not converge."""


class StiffnessError(C1LabError):
    """Adaptive integrator step size underflowed."""


class NotFoundError(C1LabError):
    """An iterative search exhausted its budget without converging."""


class SingularSurfaceError(C1LabError):
    """Surface normal or tangent frame is degenerate."""
