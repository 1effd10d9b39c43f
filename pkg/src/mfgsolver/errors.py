"""Exception types shared across the solver modules."""


class MfgError(Exception):
    """Base class for all errors raised by this package."""


class SingularMatrix(MfgError):
    """Linear solve found no acceptable pivot."""


class EmptyInput(MfgError):
    """An operation received an empty vector."""


class NonFiniteEvaluation(MfgError):
    """A user-supplied map returned NaN or infinity at a probe point."""


class BadParameter(MfgError):
    """A model parameter is outside its admissible range."""


class ParseError(MfgError):
    """A model document could not be parsed."""


class ValidationError(MfgError):
    """A parsed model violates a structural invariant."""


class MissingTheta(MfgError):
    """The operation needs reward weights but the model has none."""


class NonUniqueStationary(MfgError):
    """The chain has more than one stationary distribution."""


class BoundaryViolation(MfgError):
    """A barrier term was evaluated at a non-positive component."""


class NonDescent(MfgError):
    """The Newton direction is not a descent direction for the potential."""


class LineSearchStall(MfgError):
    """Backtracking exhausted its budget without an acceptable step."""


class NotConverged(MfgError):
    """An iterative solver hit its iteration cap before reaching tolerance.

    Carries the partial result so callers can inspect the trace.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonFinite(MfgError):
    """An iterative solver diverged to NaN or infinity."""


class EmptyData(MfgError):
    """An estimator received no trajectories."""
