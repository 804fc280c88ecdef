"""Issuance and verification of hash-committed, selectively disclosable
credentials.

A credential carries only salted commitments to its claims; the openings
(value, salt) travel separately in :class:`CredentialData` and stay with the
holder.
"""

import enum
import hmac
import secrets
import time
from dataclasses import dataclass

from .crypto_core import DIGEST_SIZE, commit
from .encoding import Reader, Writer
from .errors import DecodeError, DuplicateClaimName, EmptyClaimSet

DEFAULT_SALT_SIZE = 16
DEFAULT_LIFETIME = 365 * 24 * 3600

_VC_MAGIC = b"OSD-VC\x01"
_VCD_MAGIC = b"OSD-VCD\x01"


class Reason(str, enum.Enum):
    """Coarse rejection classes. Deliberately few and uninformative."""

    SIGNATURE = "signature"
    CREDENTIAL_SIGNATURE = "credential-signature"
    EXPIRY = "expiry"
    FORMAT = "format"
    STRUCTURE = "structure"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Reason = None

    def __bool__(self):
        return self.accepted


ACCEPT = Verdict(True)


def reject(reason: Reason) -> Verdict:
    return Verdict(False, reason)


@dataclass(frozen=True)
class ClaimRecord:
    name: str
    value: bytes
    salt: bytes


@dataclass(frozen=True)
class CredentialMetadata:
    issuer_id: str
    subject_id: str
    type: str
    issued_at: int
    expires_at: int

    def write(self, w: Writer) -> None:
        w.text(self.issuer_id).text(self.subject_id).text(self.type)
        w.u64(self.issued_at).u64(self.expires_at)

    @classmethod
    def read(cls, r: Reader) -> "CredentialMetadata":
        return cls(r.text(), r.text(), r.text(), r.u64(), r.u64())

    def well_formed(self) -> bool:
        return bool(self.issuer_id and self.subject_id and self.type) and (
            self.issued_at <= self.expires_at)


@dataclass
class VerifiableCredential:
    commitments: dict
    metadata: CredentialMetadata
    proof: bytes = b""

    def signing_payload(self) -> bytes:
        w = Writer().raw(_VC_MAGIC).u32(len(self.commitments))
        for name in sorted(self.commitments):
            w.text(name).raw(self.commitments[name])
        self.metadata.write(w)
        return w.getvalue()

    def to_bytes(self) -> bytes:
        return self.signing_payload() + Writer().short(self.proof).getvalue()

    @classmethod
    def read(cls, r: Reader) -> "VerifiableCredential":
        if r.raw(len(_VC_MAGIC)) != _VC_MAGIC:
            raise DecodeError(r.pos)
        commitments = {}
        previous = None
        for _ in range(r.u32()):
            name = r.text()
            # canonical form: strictly increasing names
            if previous is not None and name <= previous:
                raise DecodeError(r.pos)
            previous = name
            commitments[name] = r.raw(DIGEST_SIZE)
        metadata = CredentialMetadata.read(r)
        return cls(commitments, metadata, r.short())

    @classmethod
    def from_bytes(cls, data: bytes) -> "VerifiableCredential":
        r = Reader(data)
        vc = cls.read(r)
        r.done()
        return vc

    def to_json(self) -> dict:
        m = self.metadata
        return {
            "commitments": {name: self.commitments[name].hex() for name in sorted(self.commitments)},
            "metadata": {"issuer": m.issuer_id, "subject": m.subject_id, "type": m.type,
                         "issued_at": m.issued_at, "expires_at": m.expires_at},
            "proof": self.proof.hex(),
        }


@dataclass
class CredentialData:
    openings: dict  # name -> (value, salt)

    def records(self):
        return [ClaimRecord(n, v, s) for n, (v, s) in sorted(self.openings.items())]

    def to_bytes(self) -> bytes:
        w = Writer().raw(_VCD_MAGIC).u32(len(self.openings))
        for name in sorted(self.openings):
            value, salt = self.openings[name]
            w.text(name).blob(value).short(salt)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CredentialData":
        r = Reader(data)
        if r.raw(len(_VCD_MAGIC)) != _VCD_MAGIC:
            raise DecodeError(0)
        openings = {}
        for _ in range(r.u32()):
            name = r.text()
            openings[name] = (r.blob(), r.short())
        r.done()
        return cls(openings)

    def to_json(self) -> dict:
        return {name: {"value": v.hex(), "salt": s.hex()}
                for name, (v, s) in sorted(self.openings.items())}


def _as_bytes(value) -> bytes:
    return value.encode("utf-8") if isinstance(value, str) else bytes(value)


def issue(issuer, subject_id: str, claims, *, credential_type="VerifiableCredential",
          issued_at=None, lifetime=DEFAULT_LIFETIME, salt_size=DEFAULT_SALT_SIZE,
          rng=None, directory=None):
    """Commit to ``claims`` (an iterable of ``(name, value)``) and sign.

    Returns ``(VerifiableCredential, CredentialData)``. If ``directory`` is
    given the issuer must already be registered in it.
    """
    claims = [(name, _as_bytes(value)) for name, value in claims]
    if not claims:
        raise EmptyClaimSet()
    names = [name for name, _ in claims]
    if len(set(names)) != len(names):
        raise DuplicateClaimName(next(n for n in names if names.count(n) > 1))
    if any(not name for name in names):
        raise ValueError("claim names must be non-empty")
    if directory is not None and directory.lookup(issuer.party_id) != issuer.public_bytes:
        raise ValueError(f"issuer {issuer.party_id!r} is not registered")

    openings, commitments = {}, {}
    for name, value in claims:
        salt = secrets.token_bytes(salt_size) if rng is None else rng.randbytes(salt_size)
        openings[name] = (value, salt)
        commitments[name] = commit(value, salt)

    issued_at = int(time.time()) if issued_at is None else issued_at
    metadata = CredentialMetadata(issuer.party_id, subject_id, credential_type,
                                  issued_at, issued_at + lifetime)
    vc = VerifiableCredential(commitments, metadata)
    vc.proof = issuer.sign(vc.signing_payload())
    return vc, CredentialData(openings)


def verify_credential(vc: VerifiableCredential, directory, now=None) -> Verdict:
    """Check the issuer signature, metadata shape and expiry. Never raises."""
    try:
        if not vc.commitments or any(len(d) != DIGEST_SIZE for d in vc.commitments.values()):
            return reject(Reason.FORMAT)
        if not directory.verify(vc.metadata.issuer_id, vc.proof, vc.signing_payload()):
            return reject(Reason.SIGNATURE)
        if not vc.metadata.well_formed():
            return reject(Reason.FORMAT)
    except Exception:
        return reject(Reason.FORMAT)
    now = int(time.time()) if now is None else now
    if not vc.metadata.issued_at <= now <= vc.metadata.expires_at:
        return reject(Reason.EXPIRY)
    return ACCEPT


def verify_opening(x: bytes, value: bytes, salt: bytes) -> bool:
    return hmac.compare_digest(commit(value, salt), x)


def data_opens(vc: VerifiableCredential, data: CredentialData) -> bool:
    if set(vc.commitments) != set(data.openings):
        return False
    return all(verify_opening(vc.commitments[n], v, s) for n, (v, s) in data.openings.items())
