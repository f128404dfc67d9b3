"""Exception types shared across the package."""


class HalflineError(Exception):
    """Base class for all errors raised by halfline."""


class InvalidArgument(HalflineError, ValueError):
    pass


class InvalidWeight(InvalidArgument):
    pass


class InvalidGenerator(InvalidArgument):
    pass


class QuadratureFailure(HalflineError, ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy on a cell."""

    def __init__(self, message, cell=None, estimate=None, error=None):
        super().__init__(message)
        self.cell = cell
        self.estimate = estimate
        self.error = error


class ConfigError(HalflineError, ValueError):
    """Malformed or unresolvable experiment configuration."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line


class NumericFailure(HalflineError, ArithmeticError):
    """A probe produced NaN or an unexpected infinity."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
