"""Exception taxonomy shared across the package.

The CLI maps these onto its fixed exit codes, so the distinctions are part
of the external contract, not just internal bookkeeping.
"""


class HybridOptError(Exception):
    """Base class for all package errors."""


class DomainError(HybridOptError):
    """A point or query lies outside its admissible domain."""


class ValidationError(HybridOptError):
    """Constructor or argument invariants violated."""


class CapacityError(HybridOptError):
    """A desk-scale size cap was exceeded."""


class ModelError(HybridOptError):
    """Model coefficients evaluated to inadmissible values."""


class BoundViolationError(ModelError):
    """A declared bound (e.g. the transition-rate bound) was exceeded."""


class StepSizeError(HybridOptError):
    """Time step too large for the declared rate bound."""


class UsageError(HybridOptError):
    """API misuse, e.g. a history that does not cover the queried time."""


class NumericalError(HybridOptError):
    """Evaluation produced a non-finite or undefined value."""


class SimulationError(HybridOptError):
    """A simulated path blew up or left the admissible region."""


class ExprError(HybridOptError):
    """Expression parse error, annotated with source position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
