"""Exception hierarchy shared across the package.

Data errors map to CLI exit code 3, gateway errors to exit code 4.
"""

from __future__ import annotations


class AdlxError(Exception):
    """Base class for all package errors."""


class DataError(AdlxError):
    """Invalid input data or parameters."""


class MalformedRow(DataError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnknownEntity(DataError):
    pass


class UnknownStatus(DataError):
    pass


class UnknownActivity(DataError):
    pass


class MissingLabel(DataError):
    pass


class EmptyActivitySet(DataError):
    pass


class InvalidParameters(DataError):
    pass


class SchemaViolation(DataError):
    pass


class UnmappedFeature(DataError):
    pass


class InvalidScenario(DataError):
    pass


class EmptyInput(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class PromptTooLarge(DataError):
    pass


class ExtractionError(AdlxError):
    """Raw model output could not be turned into a prediction record."""


class HallucinatedLabel(ExtractionError):
    """The output names an activity outside the candidate set."""

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"predicted activity {label!r} is not in the candidate set")


class MissingExplanation(ExtractionError):
    pass


class UnparseableOutput(ExtractionError):
    pass


class GatewayError(AdlxError):
    """Completion backend failures."""


class ProviderError(GatewayError):
    """Non-retryable provider response."""

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class TransientProviderError(ProviderError):
    """Retryable provider response (rate limit, 5xx)."""


class GatewayTimeout(GatewayError):
    pass


class RateLimitedExhausted(GatewayError):
    """All retry attempts spent; carries the per-attempt error log."""

    def __init__(self, attempts):
        self.attempts = list(attempts)
        super().__init__(
            f"retries exhausted after {len(self.attempts)} attempts: "
            + "; ".join(str(a) for a in self.attempts)
        )


class QueueFull(GatewayError):
    pass


class ReplayMiss(GatewayError):
    """No recorded fixture for this request digest."""
