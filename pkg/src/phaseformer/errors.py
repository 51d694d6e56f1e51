"""Exception taxonomy shared across the package.

CLI exit codes map onto these: usage errors exit 1, data/ingestion errors
exit 2, numerical aborts exit 3.
"""


class PhaseformerError(Exception):
    """Base class for all package errors."""


class DimensionError(PhaseformerError):
    """Tensor shapes disagree; the message names the offending axes."""


class ConfigurationError(PhaseformerError):
    """A structural precondition on sizes/kernels/config values is violated."""


class DomainError(PhaseformerError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(PhaseformerError):
    """The API or CLI was invoked incorrectly."""


class IngestionError(PhaseformerError):
    """An input file could not be decoded."""

    def __init__(self, message, path=None, offset=None):
        detail = message
        if path is not None:
            detail += f" (file: {path}"
            if offset is not None:
                detail += f", byte offset: {offset}"
            detail += ")"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class NumericalAbort(PhaseformerError):
    """Training or checking hit a non-finite value and stopped."""
