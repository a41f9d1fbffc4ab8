"""Exception hierarchy shared by every module of the package."""


class StopTimeError(Exception):
    """Base class for all errors raised by :mod:`stoptime`."""


class NotHermitian(StopTimeError):
    pass


class NoConvergence(StopTimeError):
    pass


class NotPSD(StopTimeError):
    pass


class DimensionMismatch(StopTimeError):
    pass


class ClosureDidNotConverge(StopTimeError):
    pass


class NotProjection(StopTimeError):
    """A matrix claimed to be an orthogonal projection is not one.

    The offending residuals are kept on the instance so callers can report them.
    """

    def __init__(self, message, idempotence=None, hermiticity=None):
        super().__init__(message)
        self.idempotence = idempotence
        self.hermiticity = hermiticity


class OperandNotProjection(NotProjection):
    pass


class NotInAlgebra(StopTimeError):
    pass


class NotFaithful(StopTimeError):
    pass


class StateNotNormalized(StopTimeError):
    pass


class UnknownTimePoint(StopTimeError, KeyError):
    pass


class ExpectationDoesNotExist(StopTimeError):
    pass


class InvalidPartition(StopTimeError):
    pass


class MonotonicityViolation(StopTimeError):
    pass


class NotAMartingale(StopTimeError):
    pass


class NotInBTau(StopTimeError):
    pass


class GnsMismatch(StopTimeError):
    pass


class PullbackFailed(StopTimeError):
    pass


class ValidationError(StopTimeError):
    pass


class ParseError(StopTimeError):
    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class ConsistencyError(StopTimeError):
    """Two routes to the same quantity disagree beyond tolerance."""
