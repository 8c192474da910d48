"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed or out-of-domain input (shapes, signs, non-finite entries)."""


class DomainError(ValueError):
    """Requested quantity is not defined for the given argument."""


class DegenerateObservationError(ValueError):
    """An observation has zero likelihood under the current parameters."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"observation {index} has zero likelihood")


class DeadStateError(RuntimeError):
    """A latent state accumulated no occupation time during estimation."""

    def __init__(self, state, message=None):
        self.state = state
        super().__init__(message or f"state {state} has zero expected occupation time")


class TableParseError(ValueError):
    """A text table could not be parsed; carries the 1-based line number."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ScoreOverflowError(ValueError):
    """A linear predictor overflowed the exponential link."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"linear predictor overflows at observation {index}")
