"""Exception hierarchy shared by every module of the package."""


class MFGError(Exception):
    """Base class for all package errors."""


class DomainError(MFGError, ValueError):
    """An argument lies outside the domain of a function (for instance m < 0)."""


class UsageError(MFGError, ValueError):
    """Inputs that are well-typed but cannot be used together."""


class ConfigError(UsageError):
    """Invalid run configuration; ``location`` names the offending key."""

    def __init__(self, message, location=None, path=None):
        self.location = location
        self.path = path
        self.detail = message
        prefix = ": ".join(str(p) for p in (path, location) if p)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class NumericError(MFGError, ArithmeticError):
    """An inner scalar solve failed; ``trace`` holds the iteration history."""

    def __init__(self, message, trace=None, residual=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.residual = residual


class ConvergenceError(MFGError, RuntimeError):
    """An outer solver hit its iteration cap.

    ``result`` carries the best iterate found so far, ``diagnostics`` the
    residual histories.
    """

    def __init__(self, message, diagnostics=None, result=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.result = result


class SweepError(MFGError, RuntimeError):
    """A solve inside a vanishing-discount sweep failed."""

    def __init__(self, message, partial=None, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
