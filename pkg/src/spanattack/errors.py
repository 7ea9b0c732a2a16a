"""Exception hierarchy shared across the package."""


class SpanAttackError(Exception):
    """Base class for all package errors."""


class InputError(SpanAttackError, ValueError):
    """Invalid argument: wrong dimension, non-finite entries, bad parameter."""


class EmptyBasisError(InputError):
    """Every input vector was dropped during orthonormalization."""


class DataError(SpanAttackError):
    """A model or dataset file failed to parse or validate."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class BudgetExhausted(SpanAttackError):
    """Raised when a query would exceed the attack budget."""


class NotCorrectlyClassified(SpanAttackError):
    """The instance to attack is already misclassified by the target."""


class NoAdversaryError(SpanAttackError):
    """No adversarial configuration exists (e.g. all training labels agree)."""


class EnumerationGuardError(SpanAttackError):
    """Exhaustive enumeration would exceed the configured guard."""


class InvariantViolation(SpanAttackError):
    """An internal consistency check failed."""
