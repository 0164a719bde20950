"""Exception types shared across the toolkit."""


class EfimKitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EfimKitError):
    """Invalid configuration value or file."""


class InvalidTokenError(EfimKitError):
    """A token id that is not part of the vocabulary."""


class MalformedPromptError(EfimKitError):
    """A prompt whose special tokens are missing, duplicated, or misordered."""


class RequestError(EfimKitError):
    """An infill request that fails validation."""


class CacheAccountingError(EfimKitError):
    """Pin/release imbalance detected in the cache tree."""


class UndefinedMetricError(EfimKitError):
    """A ratio metric requested before any data was recorded."""


class TraceParseError(EfimKitError):
    """A malformed line in a JSONL workload trace."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ReportComparisonError(EfimKitError):
    """Reports being compared do not describe the same workload."""


class DocumentTooShortError(EfimKitError):
    """Signal that a document is too short to transform and should be skipped."""
