"""Exception hierarchy shared across the package."""


class EventMemoryError(ValueError):
    """Base class for every error raised by eventforest."""


class ZeroNormToken(EventMemoryError):
    pass


class InvalidTarget(EventMemoryError):
    pass


class InvalidGrid(EventMemoryError):
    pass


class ShapeMismatch(EventMemoryError):
    pass


class NonMonotonicTime(EventMemoryError):
    pass


class InvalidQueryTime(EventMemoryError):
    pass


class SingleRoot(EventMemoryError):
    pass


class InvalidSpec(EventMemoryError):
    pass


class BadMagic(EventMemoryError):
    pass


class TruncatedFile(EventMemoryError):
    pass


class MismatchedStream(EventMemoryError):
    pass


class ConfigError(EventMemoryError):
    pass
