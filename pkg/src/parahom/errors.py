class ConfigurationError(ValueError):
    """Invalid parameters; ``key`` names the offending setting (e.g. ``"dt"``)."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class InvariantViolation(AssertionError):
    """A scientific check failed (comparison principle, ordering, decay, ...)."""


class SolveError(RuntimeError):
    """The march produced non-finite values."""

    def __init__(self, step: int, message: str = "non-finite value"):
        self.step = step
        super().__init__(f"{message} at step {step}")
