class IndexBuilderError(Exception):
    """Base class for builder failures."""


class PinMismatch(IndexBuilderError):
    """The source tree is checked out at a different commit than requested."""


class LengthMismatch(IndexBuilderError):
    """Declarations and vectors disagree in count."""


class EmbedderUnavailable(IndexBuilderError):
    """The embedding endpoint kept failing after retries."""
