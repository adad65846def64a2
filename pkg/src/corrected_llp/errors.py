"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(DomainError):
    """A theorem precondition (for example ``R > phi(0)/(K L)``) is violated."""


class UnsupportedLossError(TypeError):
    """The loss lacks a capability required by the caller (e.g. a second derivative)."""


class DivergenceError(ArithmeticError):
    """Gradient descent produced a non-finite objective."""

    def __init__(self, step, value):
        super().__init__(f"objective became non-finite ({value!r}) at step {step}")
        self.step = step
        self.value = value
        self.snapshots: dict = {}


class InputError(ValueError):
    """Malformed user-supplied data (files, configs, bag collections)."""
