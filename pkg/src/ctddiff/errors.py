"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class InvalidStateError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss blows up; carries the loss trace so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace
