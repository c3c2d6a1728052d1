"""Exception hierarchy shared across the package."""


class DreamError(Exception):
    """Base class for all package errors."""


class DimensionError(DreamError, ValueError):
    pass


class NonFiniteError(DreamError, FloatingPointError):
    pass


class ParseError(DreamError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class ConfigError(DreamError, ValueError):
    pass


class SamplingError(DreamError, ValueError):
    pass


class ModelingError(DreamError, RuntimeError):
    pass


class TrainingError(DreamError, RuntimeError):
    pass


class EvaluationError(DreamError, RuntimeError):
    pass
