"""Exception types shared across the package."""


class SpikeschedError(Exception):
    """Base class for all errors raised by this package."""


class NumericDomainError(SpikeschedError):
    """Non-finite or out-of-domain numeric input."""


class StructuralError(SpikeschedError):
    """Shapes or layer wiring are inconsistent."""


class NetworkParseError(SpikeschedError):
    """Network description file is malformed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SimulationError(SpikeschedError):
    """A schedule violates a pipeline dependency."""


class TrainingError(SpikeschedError):
    """Training aborted (empty dataset, diverged loss, bad delays)."""
