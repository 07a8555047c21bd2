"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PirError(Exception):
    """Base class for every error raised by this package."""


class UsageError(PirError, ValueError):
    """Invalid arguments or parameter combinations supplied by the caller."""


class SingularMatrixError(PirError, ArithmeticError):
    pass


class FieldTooSmallError(UsageError):
    pass


class InsufficientDataError(PirError):
    pass


class CorruptionError(PirError):
    pass


class ProtocolInvariantError(PirError):
    """Decoding hit a state that honest answers can never produce."""


class MalformedQueryError(PirError):
    pass


class MalformedFrameError(PirError):
    pass


class EnumerationTooLargeError(UsageError):
    pass


class NetworkError(PirError):
    """Transport-level failure talking to one server."""

    def __init__(self, message: str, server: int | None = None, endpoint: str | None = None):
        super().__init__(message)
        self.server = server
        self.endpoint = endpoint


class RemoteError(NetworkError):
    """A server answered with an ERROR frame."""

    def __init__(self, message: str, server: int, code: int):
        super().__init__(message, server)
        self.code = code
