"""Exception hierarchy shared by all estimation modules.

Every exception carries a module-qualified ``code`` so command-line runs can
emit a machine-readable error report.
"""


class CrcError(Exception):
    """Base class for all package errors."""

    code = "crciv.Error"

    def to_dict(self):
        return {"code": self.code, "message": str(self)}


class ConfigurationError(CrcError, ValueError):
    code = "config.InvalidConfiguration"

    def __init__(self, message, module="config"):
        super().__init__(message)
        self.code = f"{module}.ConfigurationError"


class ParseError(CrcError, ValueError):
    code = "dataset.ParseError"

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column

    def to_dict(self):
        out = super().to_dict()
        out.update(row=self.row, column=self.column)
        return out


class EstimationError(CrcError, RuntimeError):
    code = "estimation.EstimationError"

    def __init__(self, message, module="estimation"):
        super().__init__(message)
        self.code = f"{module}.EstimationError"


class ConvergenceError(EstimationError):
    """Iterative solver hit its iteration cap.

    ``last_iterate`` holds the final coefficient vector and ``gap`` the
    remaining optimality violation.
    """

    def __init__(self, message, last_iterate=None, gap=None, module="first_stage"):
        super().__init__(message, module=module)
        self.code = f"{module}.ConvergenceError"
        self.last_iterate = last_iterate
        self.gap = gap


class NumericalError(CrcError, ArithmeticError):
    code = "estimator.NumericalError"
