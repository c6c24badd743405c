"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class DivergenceError(RuntimeError):
    """Numerical blow-up (non-finite state, loss, or gradient).

    Carries the step or epoch index at which the blow-up was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(ValueError):
    """A file does not conform to its expected on-disk format."""


class VersionError(FormatError):
    """A file carries an unsupported version tag."""


class UndefinedMetricError(ValueError):
    """A metric is mathematically undefined for the given data."""
