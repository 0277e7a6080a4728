"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class InfeasibleError(RuntimeError):
    """Raised when the safety QP has no solution and the policy is ``error``."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
