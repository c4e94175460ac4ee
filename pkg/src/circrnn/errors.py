"""Exception hierarchy shared by the library and the CLI."""


class CircRNNError(Exception):
    """Base class for all errors raised by circrnn."""


class LengthError(CircRNNError, ValueError):
    """A vector length violates a power-of-two or equal-length requirement."""

    def __init__(self, message, length=None):
        super().__init__(message)
        self.length = length


class ShapeError(CircRNNError, ValueError):
    """An operand's shape does not match the tensor it is combined with."""

    def __init__(self, message, tensor=None):
        if tensor is not None:
            message = f"{tensor}: {message}"
        super().__init__(message)
        self.tensor = tensor


class ConfigError(CircRNNError, ValueError):
    """Invalid configuration value; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class DivergenceError(CircRNNError, ArithmeticError):
    """Training loss became non-finite."""

    def __init__(self, step, loss):
        super().__init__(f"loss diverged at step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss


class QuantizationError(CircRNNError, ValueError):
    """Value cannot be represented (NaN) or raw integer out of 12-bit range."""


class ModelFileError(CircRNNError, ValueError):
    """Model file is unreadable or structurally invalid.

    ``where`` is a JSON field path such as ``tensors[3].values`` or a
    character offset such as ``offset 1042``.
    """

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where
