"""Exception types shared by the solvers; the CLI maps each to one exit code."""


class UnsupportedRegime(ValueError):
    """The (norm, p) pair or the exponents fall outside the supported theory."""


class ConvergenceError(RuntimeError):
    """An iteration cap was hit; ``report`` and ``state`` hold the partial result."""

    def __init__(self, message, report=None, state=None):
        super().__init__(message)
        self.report = report
        self.state = state


class InvariantViolation(RuntimeError):
    """A property that must hold for a correct solver failed (e.g. monotonicity)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
