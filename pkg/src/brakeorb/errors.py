"""Exception hierarchy shared by the solver modules."""


class BrakeOrbError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BrakeOrbError):
    pass


class Degenerate(BrakeOrbError):
    """A minimum of the potential has a non positive definite Hessian."""


class RMaxTooSmall(BrakeOrbError):
    pass


class NonConvergence(BrakeOrbError):
    pass


class ConstraintActive(BrakeOrbError):
    """An iterate left the ball of radius M while its action was below C0."""


class TailTooShort(BrakeOrbError):
    pass


class NewtonDivergence(BrakeOrbError):
    pass


class GuardViolated(BrakeOrbError):
    pass


class PreconditionNotMet(BrakeOrbError):
    pass


class SmallnessFails(BrakeOrbError):
    def __init__(self, msg, lhs=None, rhs=None):
        super().__init__(msg)
        self.lhs = lhs
        self.rhs = rhs


class TrapViolation(BrakeOrbError):
    def __init__(self, msg, d=None):
        super().__init__(msg)
        self.d = d


class FormatError(BrakeOrbError):
    """Binary field file has the wrong magic, version or size."""


class DimensionError(BrakeOrbError):
    pass
