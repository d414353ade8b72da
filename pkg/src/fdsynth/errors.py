"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class FdError(Exception):
    code = "error"
    exit_code = 1

    def __init__(self, message, *, code=None, location=None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.location = location

    def as_dict(self):
        out = {"code": self.code, "message": str(self)}
        if self.location is not None:
            out["location"] = self.location
        return out


class ModelError(FdError):
    """Invalid model structure or input document (CLI exit code 2)."""

    code = "invalid_model"
    exit_code = 2


class NumericError(FdError):
    """Numerical failure: infinite cost, overflow, precision loss (exit code 3)."""

    code = "numeric_failure"
    exit_code = 3
