from typing import Any, Dict, Optional


class SpinEchoError(Exception):
    pass


class InvalidArgumentError(SpinEchoError, ValueError):
    pass


class DegenerateConfigurationError(InvalidArgumentError):
    """The requested quantity is undefined for this configuration."""


class ImproperlyConfigured(SpinEchoError):
    """Configuration file, key or environment problem."""


class ParseError(SpinEchoError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class FitError(SpinEchoError):
    pass


class UnderdeterminedFitError(FitError):
    pass


class FitConvergenceError(FitError):
    def __init__(
        self, message: str, diagnostics: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnphysicalFitError(FitError):
    pass
