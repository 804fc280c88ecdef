"""Holder-side presentation building and verifier-side structural checks.

Each claim opening is encrypted under an OPRF-derived key bound to its
commitment digest; the digest doubles as associated data. The presentation
master secret never leaves :class:`PresentationSecret`.
"""

import secrets
import threading
import time
from dataclasses import dataclass, field

from .credential import (
    ACCEPT,
    CredentialData,
    Reason,
    VerifiableCredential,
    data_opens,
    reject,
    verify_credential,
)
from .crypto_core import (
    DIGEST_SIZE,
    IV_SIZE,
    TAG_SIZE,
    AeadBox,
    aead_seal,
    derive_key_direct,
    random_iv,
    random_scalar,
)
from .encoding import Reader, Writer, frame_bytes
from .errors import DecodeError, OpeningMismatch

NONCE_SIZE = 16
DEFAULT_MAX_AGE = 3600

_VP_MAGIC = b"OSD-VP\x01"
_DVP_MAGIC = b"OSD-DVP\x01"
_SECRET_MAGIC = b"OSD-SECRET\x01"


@dataclass(frozen=True)
class PresentationMetadata:
    holder_id: str
    audience_id: str
    nonce: bytes
    created_at: int


@dataclass
class VerifiablePresentation:
    credentials: list
    metadata: PresentationMetadata
    proof: bytes = b""

    def signing_payload(self) -> bytes:
        w = Writer().raw(_VP_MAGIC).u32(len(self.credentials))
        for vc in self.credentials:
            w.blob(vc.to_bytes())
        m = self.metadata
        w.text(m.holder_id).text(m.audience_id).short(m.nonce).u64(m.created_at)
        return w.getvalue()

    def to_bytes(self) -> bytes:
        return self.signing_payload() + Writer().short(self.proof).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VerifiablePresentation":
        r = Reader(data)
        if r.raw(len(_VP_MAGIC)) != _VP_MAGIC:
            raise DecodeError(0)
        credentials = [VerifiableCredential.from_bytes(r.blob()) for _ in range(r.u32())]
        metadata = PresentationMetadata(r.text(), r.text(), r.short(), r.u64())
        proof = r.short()
        r.done()
        return cls(credentials, metadata, proof)

    def to_json(self) -> dict:
        m = self.metadata
        return {
            "credentials": [vc.to_json() for vc in self.credentials],
            "metadata": {"holder": m.holder_id, "audience": m.audience_id,
                         "nonce": m.nonce.hex(), "created_at": m.created_at},
            "proof": self.proof.hex(),
        }


@dataclass(frozen=True)
class EncryptedClaim:
    digest: bytes
    box: AeadBox


@dataclass
class EncryptedClaimSet:
    entries: dict  # claim name -> EncryptedClaim


@dataclass
class PresentationData:
    sets: list

    def claim_count(self) -> int:
        return sum(len(s.entries) for s in self.sets)

    def payload_size(self) -> int:
        """Bytes of iv + ciphertext + tag summed over every claim."""
        return sum(len(e.box) for s in self.sets for e in s.entries.values())

    def to_bytes(self) -> bytes:
        w = Writer().raw(_DVP_MAGIC).u32(len(self.sets))
        for claim_set in self.sets:
            w.u32(len(claim_set.entries))
            for name in sorted(claim_set.entries):
                entry = claim_set.entries[name]
                w.text(name).raw(entry.digest).raw(entry.box.iv)
                w.blob(entry.box.ciphertext).raw(entry.box.tag)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PresentationData":
        r = Reader(data)
        if r.raw(len(_DVP_MAGIC)) != _DVP_MAGIC:
            raise DecodeError(0)
        sets = []
        for _ in range(r.u32()):
            entries = {}
            previous = None
            for _ in range(r.u32()):
                name = r.text()
                if previous is not None and name <= previous:
                    raise DecodeError(r.pos)
                previous = name
                digest, iv = r.raw(DIGEST_SIZE), r.raw(IV_SIZE)
                ciphertext, tag = r.blob(), r.raw(TAG_SIZE)
                entries[name] = EncryptedClaim(digest, AeadBox(iv, ciphertext, tag))
            sets.append(EncryptedClaimSet(entries))
        r.done()
        return cls(sets)

    def to_json(self) -> list:
        return [
            {name: {"digest": e.digest.hex(), "iv": e.box.iv.hex(),
                    "ciphertext": e.box.ciphertext.hex(), "tag": e.box.tag.hex()}
             for name, e in sorted(s.entries.items())}
            for s in self.sets
        ]


@dataclass
class PresentationSecret:
    """The per-presentation OPRF key. Single owner; :meth:`close` wipes it.

    Python ints are immutable, so "wiping" drops the only reference held
    here; it cannot scrub copies the interpreter may have made.
    """

    msk: int
    nonce: bytes
    closed: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _pool: object = field(default=None, repr=False)

    def close(self) -> None:
        with self._lock:
            self.msk = 0
            self.closed = True

    def to_bytes(self) -> bytes:
        if self.closed:
            raise ValueError("secret is closed")
        return (Writer().raw(_SECRET_MAGIC).raw(self.msk.to_bytes(32, "big"))
                .short(self.nonce).getvalue())

    @classmethod
    def from_bytes(cls, data: bytes) -> "PresentationSecret":
        r = Reader(data)
        if r.raw(len(_SECRET_MAGIC)) != _SECRET_MAGIC:
            raise DecodeError(0)
        msk = int.from_bytes(r.raw(32), "big")
        nonce = r.short()
        r.done()
        return cls(msk, nonce)


def claim_plaintext(value: bytes, salt: bytes) -> bytes:
    """Length-framed opening; hashing it yields the commitment directly."""
    return frame_bytes(value, salt)


def split_plaintext(plaintext: bytes):
    r = Reader(plaintext)
    value = r.raw(r.u64())
    salt = r.raw(r.u64())
    r.done()
    return value, salt


def encrypt_claims(msk: int, vc: VerifiableCredential, data: CredentialData,
                   rng=None) -> EncryptedClaimSet:
    entries = {}
    for name in sorted(vc.commitments):
        x = vc.commitments[name]
        value, salt = data.openings[name]
        key = derive_key_direct(msk, x)
        box = aead_seal(key, random_iv(rng), claim_plaintext(value, salt), x)
        entries[name] = EncryptedClaim(x, box)
    return EncryptedClaimSet(entries)


def create_presentation(holder, inputs, audience_id: str, rng=None, *, created_at=None):
    """Bundle credentials and build the encrypted claim data.

    ``inputs`` is a sequence of ``(VerifiableCredential, CredentialData)``.
    Returns ``(VerifiablePresentation, PresentationData, PresentationSecret)``.
    """
    inputs = list(inputs)
    for vc, data in inputs:
        if not data_opens(vc, data):
            raise OpeningMismatch()

    msk = random_scalar(rng=rng)
    nonce = secrets.token_bytes(NONCE_SIZE) if rng is None else rng.randbytes(NONCE_SIZE)
    d_vp = PresentationData([encrypt_claims(msk, vc, data, rng) for vc, data in inputs])

    created_at = int(time.time()) if created_at is None else created_at
    metadata = PresentationMetadata(holder.party_id, audience_id, nonce, created_at)
    vp = VerifiablePresentation([vc for vc, _ in inputs], metadata)
    vp.proof = holder.sign(vp.signing_payload())
    return vp, d_vp, PresentationSecret(msk, nonce)


def validate_presentation(vp: VerifiablePresentation, d_vp: PresentationData, directory, *,
                          audience=None, now=None, max_age=DEFAULT_MAX_AGE):
    """Holder signature, every credential, metadata, then D_VP alignment.

    Returns a :class:`~oblivsd.credential.Verdict`; never raises.
    """
    now = int(time.time()) if now is None else now
    m = vp.metadata
    try:
        if not directory.verify(m.holder_id, vp.proof, vp.signing_payload()):
            return reject(Reason.SIGNATURE)
    except Exception:
        return reject(Reason.FORMAT)
    if not vp.credentials or len(m.nonce) != NONCE_SIZE:
        return reject(Reason.FORMAT)
    for vc in vp.credentials:
        verdict = verify_credential(vc, directory, now)
        if not verdict:
            return reject(Reason.EXPIRY if verdict.reason is Reason.EXPIRY
                          else Reason.CREDENTIAL_SIGNATURE)
        if vc.metadata.subject_id != m.holder_id:
            return reject(Reason.FORMAT)
    if audience is not None and m.audience_id != audience:
        return reject(Reason.FORMAT)
    if max_age is not None and not (m.created_at <= now + 60 and now - m.created_at <= max_age):
        return reject(Reason.EXPIRY)

    if len(d_vp.sets) != len(vp.credentials):
        return reject(Reason.STRUCTURE)
    for vc, claim_set in zip(vp.credentials, d_vp.sets):
        if set(claim_set.entries) != set(vc.commitments):
            return reject(Reason.STRUCTURE)
        if any(e.digest != vc.commitments[n] for n, e in claim_set.entries.items()):
            return reject(Reason.STRUCTURE)
    return ACCEPT
