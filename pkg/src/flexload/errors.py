"""Exception types; the CLI maps them to exit codes."""


class ValidationError(ValueError):
    """Bad input; nothing was computed."""


class NumericalError(RuntimeError):
    """A numerical procedure could not deliver a trustworthy result."""


class FixedPointError(NumericalError):
    pass


class NonMonotoneError(NumericalError):
    pass


class BudgetExceeded(RuntimeError):
    pass
