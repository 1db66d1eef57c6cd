"""Error taxonomy shared by every module.

Exit codes are part of the CLI contract: 0 ok, 2 input error,
3 transport error, 4 protocol error.
"""


class MigroupError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(MigroupError):
    """Caller-supplied data or configuration is invalid."""

    exit_code = 2


class TransportError(MigroupError):
    """An endpoint could not be reached or kept failing after retries."""

    exit_code = 3

    def __init__(self, message: str, *, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class ProtocolError(MigroupError):
    """An endpoint answered, but the payload violates the wire contract."""

    exit_code = 4

    def __init__(self, message: str, *, raw_body: str | None = None):
        super().__init__(message)
        self.raw_body = raw_body


class GroupingConflictError(InputError):
    """Two clusters map to the same interaction anchor, so R/U/S labels are ambiguous."""
