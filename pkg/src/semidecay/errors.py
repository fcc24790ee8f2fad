"""Exception hierarchy shared by all modules."""


class SemidecayError(Exception):
    """Base class for errors raised by this package."""


class SingularShift(SemidecayError):
    """``lambda*I + A`` is (numerically) singular."""


class ConvergenceFailure(SemidecayError):
    pass


class DomainError(SemidecayError, ValueError):
    pass


class ParameterDomain(SemidecayError, ValueError):
    pass


class SpectrumOutsideSector(SemidecayError):
    pass


class QuadratureNonConvergence(SemidecayError):
    pass


class NotInjective(SemidecayError):
    pass


class BranchCutIntersection(SemidecayError):
    pass


class IllConditionedEigenbasis(SemidecayError):
    pass


class ContourTooTight(SemidecayError):
    pass


class TailBoundExceeded(SemidecayError):
    pass


class IntegrabilityRejected(SemidecayError):
    pass


class OverflowRisk(SemidecayError):
    pass


class InsufficientSamples(SemidecayError):
    pass


class RangeExceeded(SemidecayError):
    pass


class HypothesisViolated(SemidecayError, ValueError):
    """A theorem's parameter constraints do not hold.

    ``inequality`` names the violated constraint.
    """

    def __init__(self, theorem_id, inequality):
        super().__init__(f"{theorem_id}: hypothesis violated: {inequality}")
        self.theorem_id = theorem_id
        self.inequality = inequality


class CalibrationFailed(SemidecayError):
    pass


class EvaluationFailure(SemidecayError):
    pass


class DivisionByZero(SemidecayError, ZeroDivisionError):
    pass
