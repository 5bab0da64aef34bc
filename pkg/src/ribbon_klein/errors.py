"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A solver step produced a singular or non-finite result."""


class ConfigError(ValueError):
    """A run configuration could not be parsed or failed validation.

    ``line`` is the 1-based line number of the offending entry, or ``None``
    when the failure concerns the configuration as a whole.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
