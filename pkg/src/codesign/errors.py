"""Exception types shared across the package."""


class CodesignError(Exception):
    """Base class for all package errors."""


class ConfigError(CodesignError, ValueError):
    pass


class DimensionError(CodesignError, ValueError):
    pass


class IllConditionedError(CodesignError, ArithmeticError):
    pass


class SolverError(CodesignError, RuntimeError):
    """Raised when an MPC plan does not reach its KKT tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class ParseError(CodesignError, ValueError):
    def __init__(self, msg, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            msg = f"{msg} ({', '.join(loc)})"
        super().__init__(msg)
        self.row = row
        self.column = column


class DivergenceError(CodesignError, FloatingPointError):
    """Training produced a non-finite loss; ``model`` holds the last good parameters."""

    def __init__(self, msg, model=None, log=None):
        super().__init__(msg)
        self.model = model
        self.log = log
