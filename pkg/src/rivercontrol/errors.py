"""Exception types shared by the solvers."""


class ConfigurationError(ValueError):
    """Invalid parameters, grid sizes or run configuration."""


class ValidationError(ValueError):
    """Malformed input data (chain files, policy files)."""


class DomainError(ValueError):
    """A query point lies outside the discretised domain."""


class SingularMatrixError(ArithmeticError):
    """A zero pivot was met during a tridiagonal elimination."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"zero pivot {pivot!r} in row {row}")
        self.row = row
        self.pivot = pivot


class IntegrationError(ArithmeticError):
    """A right-hand side or solution value became non-finite."""

    def __init__(self, step: int, t: float, y: float):
        super().__init__(f"non-finite value at step {step} (t={t!r}, y={y!r})")
        self.step = step
        self.t = t
        self.y = y


class ConvergenceError(ArithmeticError):
    """An iteration diverged (its update kept growing)."""
