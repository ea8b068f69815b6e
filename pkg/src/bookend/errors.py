"""Exception hierarchy shared by the library and the CLI exit-code contract."""

from __future__ import annotations


class BookendError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(BookendError, ValueError):
    """Input data or configuration failed validation."""

    exit_code = 2


class FcidumpError(ValidationError):
    """Malformed FCIDUMP content, located by line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(BookendError, ArithmeticError):
    """A numerical procedure failed to produce a usable result."""

    exit_code = 3


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap before converging."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        self.residual = residual
        self.iterations = iterations
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)


class EmptySubspaceError(NumericalError):
    """No configuration survived filtering, so there is nothing to diagonalize."""
