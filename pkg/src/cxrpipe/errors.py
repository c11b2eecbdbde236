"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CxrError(Exception):
    """Base class for all errors raised by cxrpipe."""


class ShapeError(CxrError, ValueError):
    """Operand shapes are incompatible.

    ``dims`` maps a human-readable dimension name to the offending sizes so
    callers (and tests) can inspect what went wrong without parsing text.
    """

    def __init__(self, op: str, message: str, **dims):
        self.op = op
        self.dims = dims
        detail = ", ".join(f"{k}={v}" for k, v in dims.items())
        super().__init__(f"{op}: {message}" + (f" ({detail})" if detail else ""))


class ValidationError(CxrError, ValueError):
    """Input data or configuration violates a documented invariant."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"byte {offset}: "
        super().__init__(where + message)


class DivergenceError(CxrError, ArithmeticError):
    """Training produced a non-finite value.

    ``trace`` carries whatever loss history was collected up to the failure.
    """

    def __init__(self, message: str, *, parameter: str | None = None, trace=None):
        self.parameter = parameter
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)


class NoDescentError(CxrError, ValueError):
    """A learning-rate sweep never showed a descending loss region."""


class CheckpointError(CxrError, ValueError):
    """A checkpoint file is truncated, from another version, or mismatched."""
