"""
Exception types shared across the laboratory
"""


class ShapeError(ValueError):
    """Tensor dimensions do not agree with an operation's rule"""


class UnboundInputError(KeyError):
    """A graph leaf was evaluated without a binding"""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value"""


class DatasetFormatError(ValueError):
    """A persisted dataset could not be parsed"""


class ModelFormatError(ValueError):
    """A persisted model could not be parsed"""


class ArtifactIOError(OSError):
    """Reading or writing an artifact file failed"""


class ConfigError(ValueError):
    """A run configuration failed validation"""
