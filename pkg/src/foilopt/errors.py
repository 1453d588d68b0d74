"""Shared exception types for solver and pipeline failures."""


class SingularSystemError(ValueError):
    """A direct solve hit a zero pivot or a singular core system."""


class NonphysicalStateError(RuntimeError):
    """Density bracket dropped to or below zero at some grid location."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ConvergenceError(RuntimeError):
    """An iterative solve diverged or exhausted its iteration budget."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class MeshValidityError(RuntimeError):
    """The grid lost orientation consistency (nonpositive Jacobian)."""


class EvaluationError(RuntimeError):
    """A design could not be evaluated (invalid mesh or failed flow solve)."""


class ConfigError(ValueError):
    """A configuration file or override does not match the schema."""
