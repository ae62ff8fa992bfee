"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """A state, parameter vector, or dataset has the wrong shape for the model."""


class CapacityError(ValueError):
    """The requested state space is too large for a dense/enumeration code path."""


class UnsupportedModelError(TypeError):
    """The model does not provide a capability required by the operation."""


class NumericError(ArithmeticError):
    """A non-finite quantity was produced during evaluation.

    Carries the offending state (if known) so callers can diagnose which
    data point or neighbor blew up.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InvalidStartError(ValueError):
    """The objective is non-finite at the optimizer's starting point."""
