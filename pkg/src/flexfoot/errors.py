"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, input file, or argument."""


class MeshFormatError(ConfigError):
    """Malformed mesh or attribute file. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalInstabilityError(RuntimeError):
    """Simulation produced a non-finite state. Carries the failing step index."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
