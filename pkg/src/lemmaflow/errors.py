"""Exception hierarchy shared across the package."""


class LemmaflowError(Exception):
    """Base class for all package errors."""


class InvalidHeader(LemmaflowError):
    pass


class BackendUnavailable(LemmaflowError):
    pass


class UnknownSession(LemmaflowError):
    pass


class SessionClosed(LemmaflowError):
    pass


class DuplicateName(LemmaflowError):
    pass


class GoalMismatch(LemmaflowError):
    pass


class ToyParseError(LemmaflowError):
    pass


class UnknownTool(LemmaflowError):
    pass


class FormatError(LemmaflowError):
    pass


class DimensionMismatch(LemmaflowError):
    pass


class EmbedderUnavailable(LemmaflowError):
    pass


class BackendError(LemmaflowError):
    pass


class TransportError(LemmaflowError):
    """Retryable transport failure talking to a remote backend."""


class SketchRejected(LemmaflowError):
    pass


class AssemblyVerificationFailed(LemmaflowError):
    pass


class DuplicateId(LemmaflowError):
    pass


class LengthMismatch(LemmaflowError):
    pass


class PinMismatch(LemmaflowError):
    pass
