"""Exception types shared across adagrow."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OptimizationError(RuntimeError):
    """Numerical minimization failed to produce a finite result."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class FilterTerminated(RuntimeError):
    """Raised by a filtered mechanism once its privacy budget is exhausted."""

    def __init__(self, t, spent_rho, target_rho):
        super().__init__(
            f"privacy filter terminated in round {t}: "
            f"charge would raise spent rho to {spent_rho:.6g} > target {target_rho:.6g}"
        )
        self.t = t
        self.spent_rho = spent_rho
        self.target_rho = target_rho


class FilterUsageError(RuntimeError):
    """A terminated filter was charged again."""


class InteractionError(RuntimeError):
    """An analyst or mechanism failed during an interaction."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StateSpaceTooLarge(ValueError):
    """An exact enumeration would exceed the configured state budget."""

    def __init__(self, size, limit):
        super().__init__(f"joint state space has {size} outcomes, limit is {limit}")
        self.size = size
        self.limit = limit
