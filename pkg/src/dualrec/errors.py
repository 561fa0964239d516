"""Exception types shared across the engine.

Persistence formats raise distinct classes per failure mode so callers
(and the CLI exit-code table) can tell them apart.
"""


class DualrecError(Exception):
    """Base class for all engine errors."""


class FormatError(DualrecError):
    """A persisted file does not match its expected layout."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """File carries an unsupported format version."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was read."""


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents."""


class DimensionMismatchError(DualrecError):
    """A vector or matrix has the wrong width."""


class NonFiniteValueError(DualrecError):
    """A vector or matrix contains NaN or infinity."""


class EngineBuildError(DualrecError):
    """An offline engine build stage failed.

    Carries the stage name so multi-stage failures are attributable.
    """

    def __init__(self, stage: str, detail: str):
        self.stage = stage
        self.detail = detail
        super().__init__(f"[{stage}] {detail}")


class ProviderError(DualrecError):
    """A token-embedding provider could not serve a request."""
