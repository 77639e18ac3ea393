"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """Invalid argument, shape, or configuration. CLI exit code 2."""


class DegenerateInputError(ParameterError):
    """Constant signal where a correlation-based quantity is undefined."""


class DataError(RuntimeError):
    """Malformed or inconsistent input data on disk. CLI exit code 3."""


class NumericError(ArithmeticError):
    """Numerical failure: NaN loss, broken monotonicity, non-finite update. CLI exit code 4."""
