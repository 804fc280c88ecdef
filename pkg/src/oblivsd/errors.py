"""Exception types shared across the package.

Protocol-facing failures deliberately carry fixed, generic messages so that a
peer cannot tell *why* something was rejected (tampering, wrong key, bad
encoding all look the same from the outside).
"""


class ProtocolError(Exception):
    """Base class for every failure surfaced by the disclosure stack."""

    message = "protocol failure"

    def __init__(self, message=None):
        super().__init__(message or self.message)


class InvalidElement(ProtocolError):
    message = "invalid group element"


class AuthFailure(ProtocolError):
    message = "authentication failed"


class OpeningMismatch(ProtocolError):
    message = "credential data does not open the credential"


class SecretClosed(ProtocolError):
    message = "presentation secret is closed"


class SessionClosed(ProtocolError):
    message = "session is not open"


class QuotaExceeded(ProtocolError):
    message = "disclosure quota exhausted"


class ClaimVerificationFailure(ProtocolError):
    message = "claim verification failed"


class TransportError(ProtocolError):
    message = "transport failure"


class HandshakeFailure(ProtocolError):
    message = "handshake failed"


class DecodeError(ProtocolError):
    """Malformed bytes. ``position`` is kept for debugging only and is not
    part of the message, so truncation and corruption read the same."""

    message = "malformed message"

    def __init__(self, position=None, *, truncated=False):
        super().__init__()
        self.position = position
        self.truncated = truncated


class BodyTooLarge(ProtocolError):
    message = "frame body exceeds the configured maximum"


class DuplicateClaimName(ValueError):
    pass


class EmptyClaimSet(ValueError):
    pass


class DuplicatePartyId(ValueError):
    pass


class DirectoryError(ProtocolError):
    message = "key directory failed verification"
