"""Party signing keys and the self-signed local key directory.

The directory stands in for DID resolution: a flat map of party id to
Ed25519 public key, signed as a whole by a root key named in its header.
"""

import json
import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .encoding import Reader, Writer
from .errors import DecodeError, DirectoryError, DuplicatePartyId

SCHEME = "ed25519"
_DIRECTORY_MAGIC = b"OSD-DIR\x01"


def _public_raw(key) -> bytes:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


def verify_signature(public_key: bytes, signature: bytes, data: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, data)
    except (InvalidSignature, ValueError):
        return False
    return True


class PartyKey:
    """A named Ed25519 signing key."""

    def __init__(self, party_id: str, private_key: Ed25519PrivateKey):
        if not party_id:
            raise ValueError("party id must be non-empty")
        self.party_id = party_id
        self._key = private_key

    @classmethod
    def generate(cls, party_id: str) -> "PartyKey":
        return cls(party_id, Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, party_id: str, seed: bytes) -> "PartyKey":
        return cls(party_id, Ed25519PrivateKey.from_private_bytes(seed))

    @property
    def public_bytes(self) -> bytes:
        return _public_raw(self._key.public_key())

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)

    def to_json(self) -> str:
        seed = self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        return json.dumps({"party_id": self.party_id, "scheme": SCHEME, "seed": seed.hex()})

    @classmethod
    def from_json(cls, text: str) -> "PartyKey":
        doc = json.loads(text)
        if doc.get("scheme") != SCHEME:
            raise ValueError("unsupported key scheme")
        return cls.from_seed(doc["party_id"], bytes.fromhex(doc["seed"]))

    def save(self, path) -> None:
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PartyKey":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def __repr__(self):
        return f"PartyKey({self.party_id!r})"


@dataclass
class KeyDirectory:
    root_key: bytes
    entries: dict = field(default_factory=dict)
    signature: bytes = b""
    scheme: str = SCHEME

    @classmethod
    def create(cls, root: PartyKey) -> "KeyDirectory":
        directory = cls(root_key=root.public_bytes)
        directory.signature = root.sign(directory.signing_payload())
        return directory

    def signing_payload(self) -> bytes:
        w = Writer().raw(_DIRECTORY_MAGIC).text(self.scheme).short(self.root_key)
        w.u32(len(self.entries))
        for party_id in sorted(self.entries):
            w.text(party_id).short(self.entries[party_id])
        return w.getvalue()

    def register(self, party_id: str, public_key: bytes, root: PartyKey) -> None:
        """Add an entry and re-sign with the root key."""
        if root.public_bytes != self.root_key:
            raise DirectoryError("root key does not match directory header")
        if party_id in self.entries:
            raise DuplicatePartyId(party_id)
        self.entries[party_id] = bytes(public_key)
        self.signature = root.sign(self.signing_payload())

    def lookup(self, party_id: str):
        return self.entries.get(party_id)

    def verify(self, party_id: str, signature: bytes, data: bytes) -> bool:
        key = self.lookup(party_id)
        return key is not None and verify_signature(key, signature, data)

    def check(self) -> None:
        if not verify_signature(self.root_key, self.signature, self.signing_payload()):
            raise DirectoryError()

    def to_bytes(self) -> bytes:
        return self.signing_payload() + Writer().short(self.signature).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyDirectory":
        """Parse and verify the root self-signature."""
        try:
            r = Reader(data)
            if r.raw(len(_DIRECTORY_MAGIC)) != _DIRECTORY_MAGIC:
                raise DecodeError(0)
            scheme = r.text()
            root_key = r.short()
            entries = {}
            for _ in range(r.u32()):
                party_id = r.text()
                entries[party_id] = r.short()
            signature = r.short()
            r.done()
        except DecodeError:
            raise DirectoryError() from None
        if scheme != SCHEME:
            raise DirectoryError()
        directory = cls(root_key=root_key, entries=entries, signature=signature, scheme=scheme)
        directory.check()
        return directory

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "KeyDirectory":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
