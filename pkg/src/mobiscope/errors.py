"""Exception hierarchy shared by all pipeline stages."""


class MobiscopeError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(MobiscopeError, ValueError):
    pass


class EmptyInputError(MobiscopeError, ValueError):
    pass


class OutOfRegionError(MobiscopeError, ValueError):
    pass


class CorruptInputError(MobiscopeError, ValueError):
    pass


class PreconditionError(MobiscopeError, ValueError):
    pass


class ParameterError(MobiscopeError, ValueError):
    pass


class ShapeError(MobiscopeError, ValueError):
    pass


class UndefinedCorrelationError(MobiscopeError, ValueError):
    pass


class ExclusionError(MobiscopeError, ValueError):
    """Raised when a user cannot contribute a feature vector for a day type."""


class DegenerateGridError(MobiscopeError, ValueError):
    pass


class ConfigError(MobiscopeError, ValueError):
    pass


class StageError(MobiscopeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
