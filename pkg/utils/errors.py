"""Centralized error handling with structured, machine-readable failures."""
from __future__ import annotations

from typing import NoReturn


class FieldViolation:
    """Represents a single field validation error."""

    def __init__(self, field: str, description: str):
        self.field = field
        self.description = description

    def __repr__(self) -> str:
        return f"FieldViolation({self.field!r}, {self.description!r})"


class ReasonCodes:
    """Stable machine-readable reason codes."""

    ALGEBRA_MISMATCH = "ALGEBRA_MISMATCH"
    DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
    NOT_A_STATE = "NOT_A_STATE"
    NOT_A_MEASUREMENT = "NOT_A_MEASUREMENT"
    NOT_INFORMATIONALLY_COMPLETE = "NOT_INFORMATIONALLY_COMPLETE"
    NON_PROJECTIVE = "NON_PROJECTIVE"
    DECOMPOSITION_RESIDUAL = "DECOMPOSITION_RESIDUAL"
    LABEL_MISMATCH = "LABEL_MISMATCH"
    PAIR_COMPATIBLE = "PAIR_COMPATIBLE"
    DEGENERATE_TASK = "DEGENERATE_TASK"
    DUAL_EXTRACTION = "DUAL_EXTRACTION"
    SOLVER_MAX_ITERATIONS = "SOLVER_MAX_ITERATIONS"
    SOLVER_DEGENERATE = "SOLVER_DEGENERATE"
    NUMERIC_FAILURE = "NUMERIC_FAILURE"
    PARSE_ERROR = "PARSE_ERROR"
    VERIFICATION_FAILED = "VERIFICATION_FAILED"


class WitnessKitError(Exception):
    """Base error carrying a reason code and optional field violations."""

    exit_code = 1

    def __init__(self, reason: str, message: str, fields: list[FieldViolation] | None = None):
        super().__init__(message)
        self.reason = reason
        self.message = message
        self.fields = fields or []

    def describe(self) -> str:
        lines = [f"[{self.reason}] {self.message}"]
        for f in self.fields:
            lines.append(f"  {f.field}: {f.description}")
        return "\n".join(lines)


class InputError(WitnessKitError, ValueError):
    """Raised when an operation is called with incompatible or invalid objects."""

    exit_code = 1


class ParseError(WitnessKitError):
    """Raised when an input file cannot be decoded."""

    exit_code = 2


class SolverError(WitnessKitError):
    """Raised when a numerical solve does not certify its answer."""

    exit_code = 3


class VerificationError(WitnessKitError):
    """Raised when a constructed object fails its post-construction check."""

    exit_code = 4


def abort(
    kind: type[WitnessKitError],
    reason: str,
    message: str,
    fields: list[FieldViolation] | None = None,
) -> NoReturn:
    """
    Abort the current operation with a structured error.

    Args:
        kind: Error class deciding the exit code (InputError, ParseError, ...)
        reason: Machine-readable reason code (e.g., ALGEBRA_MISMATCH)
        message: Human-readable error message
        fields: Optional list of field violations for validation errors

    Raises:
        Always raises ``kind``; this function does not return.
    """
    raise kind(reason, message, fields)
