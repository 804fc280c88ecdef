"""Stateless primitives: commitments, the 2HashDH OPRF, and the AEAD wrapper.

The OPRF maps a commitment digest ``x`` to a 256-bit claim key::

    key = H2(x, H1(x) ** msk)

and can be evaluated either directly by the key holder
(:func:`derive_key_direct`) or obliviously through
:func:`blind` -> :func:`evaluate` -> :func:`finalize`.

All group-taking functions default to secp256k1; pass ``group=TOY`` to run
the same code in the order-11 test group.
"""

import hashlib
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .encoding import frame_bytes
from .errors import AuthFailure, InvalidElement
from .group import SECP256K1

DIGEST_SIZE = 64
KEY_SIZE = 32
IV_SIZE = 12
TAG_SIZE = 16
H2_DST = b"CODSSI-H2-v1"

_system_rng = secrets.SystemRandom()


def commit(value: bytes, salt: bytes) -> bytes:
    """SHA3-512 over the length-framed ``value`` and ``salt``."""
    return hashlib.sha3_512(frame_bytes(value, salt)).digest()


def hash_to_group(x: bytes, group=SECP256K1):
    return group.hash_to_group(x)


def random_scalar(group=SECP256K1, rng=None) -> int:
    """Uniform scalar in ``[1, order - 1]``."""
    rng = rng or _system_rng
    return rng.randrange(1, group.order)


def _check(group, element):
    if group.is_identity(element) or not group.is_valid(element):
        raise InvalidElement()


def blind(x: bytes, rng=None, *, group=SECP256K1, r=None):
    """Return ``(r, H1(x) ** r)``. ``r`` may be forced for testing."""
    if r is None:
        r = random_scalar(group, rng)
    elif not 1 <= r < group.order:
        raise ValueError("blind must lie in [1, order - 1]")
    return r, group.exp(hash_to_group(x, group), r)


def evaluate(msk: int, a, group=SECP256K1):
    """Server step: ``a ** msk`` after rejecting identity/non-group inputs."""
    _check(group, a)
    return group.exp(a, msk)


def h2(x: bytes, c, group=SECP256K1) -> bytes:
    digest = hashlib.sha3_512(H2_DST + frame_bytes(x, group.encode(c))).digest()
    return digest[:KEY_SIZE]


def finalize(x: bytes, b, r: int, group=SECP256K1) -> bytes:
    """Client step: unblind ``b`` with ``r**-1`` and hash down to a claim key."""
    _check(group, b)
    c = group.exp(b, pow(r, -1, group.order))
    return h2(x, c, group)


def derive_key_direct(msk: int, x: bytes, group=SECP256K1) -> bytes:
    return h2(x, group.exp(hash_to_group(x, group), msk), group)


@dataclass(frozen=True)
class AeadBox:
    iv: bytes
    ciphertext: bytes
    tag: bytes

    def __post_init__(self):
        if len(self.iv) != IV_SIZE or len(self.tag) != TAG_SIZE:
            raise ValueError("AEAD box has wrong iv or tag length")

    def __len__(self):
        return IV_SIZE + len(self.ciphertext) + TAG_SIZE


def random_iv(rng=None) -> bytes:
    if rng is None:
        return secrets.token_bytes(IV_SIZE)
    return rng.randbytes(IV_SIZE)


def aead_seal(key: bytes, iv: bytes, plaintext: bytes, aad: bytes) -> AeadBox:
    """AES-256-GCM; the tag is split off so the box carries it explicitly."""
    if len(key) != KEY_SIZE:
        raise ValueError("claim keys are 32 bytes")
    sealed = AESGCM(key).encrypt(iv, plaintext, aad)
    return AeadBox(iv, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def aead_open(key: bytes, box: AeadBox, aad: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(box.iv, box.ciphertext + box.tag, aad)
    except (InvalidTag, ValueError):
        raise AuthFailure() from None
