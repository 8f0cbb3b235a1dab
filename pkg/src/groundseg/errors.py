"""Exception hierarchy shared by all ground segment services."""


class GroundSegmentError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GroundSegmentError):
    """Input document could not be parsed; message carries file/line/field."""


class ValidationError(GroundSegmentError):
    """Document parsed but violates an invariant (duplicate id, inverted limits, ...)."""


class UnknownParameter(GroundSegmentError):
    pass


class PathClassificationMismatch(GroundSegmentError):
    pass


class ScopeDenied(GroundSegmentError):
    pass


class DuplicateExperiment(GroundSegmentError):
    pass


class SelectorTouchesRestricted(ValidationError):
    pass


class UnknownProcessor(GroundSegmentError):
    pass


class UnknownProcedure(GroundSegmentError):
    pass


class NotValidated(GroundSegmentError):
    pass


class ArgumentError(GroundSegmentError):
    pass


class UnknownRun(GroundSegmentError):
    pass


class AlreadyTerminal(GroundSegmentError):
    pass


class UnauthorizedTask(GroundSegmentError):
    pass


class BeyondHorizon(GroundSegmentError):
    pass


class TargetNotExecuting(GroundSegmentError):
    pass


class NotAllowedUER(GroundSegmentError):
    pass


class ImmediateConstraintViolated(GroundSegmentError):
    pass


class NotOwner(GroundSegmentError):
    pass


class AlreadyExecuting(GroundSegmentError):
    pass


class DuplicateSession(GroundSegmentError):
    pass


class UnknownSession(GroundSegmentError):
    pass


class InvalidCredentials(GroundSegmentError):
    pass


class ExpiredToken(GroundSegmentError):
    pass


class RoleDenied(GroundSegmentError):
    pass


class AllGatewaysDown(GroundSegmentError):
    pass
