"""Exception types raised across the package."""


class RegistrationError(Exception):
    """Base class for package errors."""


class ShapeError(RegistrationError, ValueError):
    """Array dimensions violate an operation's precondition."""


class ConfigurationError(RegistrationError, ValueError):
    """An option or hyperparameter is invalid."""


class StateError(RegistrationError):
    """Internal state passed back in is inconsistent with the other inputs."""


class DivergenceError(RegistrationError, FloatingPointError):
    """The optimizer produced a non-finite loss."""

    def __init__(self, iteration, value):
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


class UndefinedMetricError(RegistrationError, ValueError):
    """A metric is undefined for the given inputs (e.g. an empty label)."""


class FileFormatError(RegistrationError, OSError):
    """A volume header is missing or malformed."""


class CorruptFileError(FileFormatError):
    """A payload does not match the size declared by its header."""
