"""Oblivious claim disclosure.

Holder side: :func:`holder_open_session` / :func:`holder_evaluate` run the
OPRF server under a quota shared by every session of one presentation
secret. Verifier side: :func:`verifier_disclose_batch` (one round) and
:func:`verifier_disclose_adaptive` (one round per claim, each pick may depend
on what was already revealed).

A *channel* is anything with ``exchange(list[bytes]) -> list[bytes]`` that
carries blinded elements to the holder and evaluated ones back, raising
:class:`QuotaExceeded` when the holder refuses. :class:`LocalChannel` wires a
verifier directly to an in-process session; the wire module provides the
framed network version.
"""

import enum
import hashlib
import threading
from dataclasses import dataclass, field

from .credential import verify_opening
from .crypto_core import aead_open, blind, evaluate, finalize
from .encoding import frame_bytes
from .errors import (
    AuthFailure,
    ClaimVerificationFailure,
    DecodeError,
    InvalidElement,
    QuotaExceeded,
    SecretClosed,
    SessionClosed,
    TransportError,
)
from .group import SECP256K1
from .presentation import split_plaintext


class SessionState(enum.Enum):
    OPEN = "open"
    EXHAUSTED = "exhausted"
    CLOSED = "closed"


class QuotaPool:
    """Evaluation counter shared by all sessions of one presentation secret."""

    def __init__(self, quota: int):
        if quota < 1:
            raise ValueError("quota must be at least 1")
        self.quota = quota
        self.used = 0
        self.lock = threading.Lock()

    def reserve(self, count: int) -> bool:
        """All-or-nothing: grant ``count`` evaluations or none."""
        with self.lock:
            if self.used + count > self.quota:
                return False
            self.used += count
            return True


def quota_pool(secret, quota: int) -> QuotaPool:
    with secret._lock:
        if secret._pool is None:
            secret._pool = QuotaPool(quota)
        elif secret._pool.quota != quota:
            raise ValueError("a presentation secret has a single quota")
        return secret._pool


def session_binding(vp_nonce: bytes, verifier_id: str, fresh_nonce: bytes,
                    transcript: bytes = b"") -> bytes:
    return hashlib.sha3_256(
        b"OSD-session" + frame_bytes(vp_nonce, verifier_id.encode(), fresh_nonce, transcript)
    ).digest()


@dataclass
class OprfSession:
    session_id: bytes
    secret: object
    pool: QuotaPool
    peer: str
    used: int = 0
    state: SessionState = SessionState.OPEN
    group: object = SECP256K1
    # (direction, element encodings) as seen by the holder
    transcript: list = field(default_factory=list)
    # frames refused by the holder's transport loop: foreign session id / malformed
    dropped: int = 0
    rejected: int = 0
    # how the peer ended the conversation: "close" (CLOSE frame) or "abort"
    ending: str = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def quota(self) -> int:
        return self.pool.quota

    def close(self) -> None:
        with self.lock:
            self.state = SessionState.CLOSED


def holder_open_session(secret, quota: int, verifier_id: str, vp_nonce: bytes,
                        fresh_nonce: bytes, *, transcript: bytes = b"", group=SECP256K1):
    """Open an OPRF session drawing on the secret's quota pool.

    ``transcript`` is an authenticated-handshake hash mixed into the session
    id; empty for in-process use.
    """
    if secret.closed:
        raise SecretClosed()
    pool = quota_pool(secret, quota)
    sid = session_binding(vp_nonce, verifier_id, fresh_nonce, transcript)
    return OprfSession(sid, secret, pool, verifier_id, group=group)


def holder_evaluate(session: OprfSession, request):
    """Evaluate a list of encoded blinded elements.

    Every element is validated before any is evaluated, and the quota is
    reserved for the whole batch or not at all.
    """
    group = session.group
    if not request:
        raise InvalidElement()
    elements = [group.decode(bytes(e)) for e in request]
    with session.lock:
        if session.state is SessionState.EXHAUSTED:
            raise QuotaExceeded()
        if session.state is not SessionState.OPEN or session.secret.closed:
            raise SessionClosed()
        if not session.pool.reserve(len(elements)):
            session.state = SessionState.EXHAUSTED
            raise QuotaExceeded()
        session.used += len(elements)
        msk = session.secret.msk
    response = [group.encode(evaluate(msk, a, group)) for a in elements]
    session.transcript.append(("in", [bytes(e) for e in request]))
    session.transcript.append(("out", response))
    return response


class LocalChannel:
    """In-process channel straight into a holder session."""

    def __init__(self, session: OprfSession):
        self.session = session
        self.rounds = 0
        self.evaluations = 0

    def exchange(self, elements):
        self.rounds += 1
        response = holder_evaluate(self.session, elements)
        self.evaluations += len(response)
        return response


@dataclass(frozen=True)
class DisclosedClaim:
    credential_index: int
    name: str
    value: bytes
    salt: bytes
    digest: bytes


def _check_selection(vp, d_vp, picks):
    seen = set()
    for idx, name in picks:
        if (idx, name) in seen:
            raise ValueError(f"duplicate pick {(idx, name)!r}")
        seen.add((idx, name))
        if not 0 <= idx < len(vp.credentials) or name not in vp.credentials[idx].commitments:
            raise KeyError((idx, name))
        if idx >= len(d_vp.sets) or name not in d_vp.sets[idx].entries:
            raise KeyError((idx, name))


def _prepare(vp, pick, rng, group):
    idx, name = pick
    x = vp.credentials[idx].commitments[name]
    r, a = blind(x, rng, group=group)
    return x, r, group.encode(a)


def _recover(d_vp, pick, x, r, b_encoded, group) -> DisclosedClaim:
    idx, name = pick
    entry = d_vp.sets[idx].entries[name]
    try:
        key = finalize(x, group.decode(b_encoded), r, group)
        plaintext = aead_open(key, entry.box, x)
        value, salt = split_plaintext(plaintext)
    except (InvalidElement, AuthFailure, DecodeError):
        raise ClaimVerificationFailure() from None
    if entry.digest != x or not verify_opening(x, value, salt):
        raise ClaimVerificationFailure()
    return DisclosedClaim(idx, name, value, salt, x)


def verifier_disclose_batch(vp, d_vp, selection, channel, rng=None, *, quota=None,
                            group=SECP256K1):
    """Fetch keys for every pick in ``selection`` in a single round.

    ``vp``/``d_vp`` must already have passed ``validate_presentation``. If
    the advertised ``quota`` is known, oversize selections are refused
    locally before anything is sent.
    """
    picks = [(int(i), n) for i, n in selection]
    _check_selection(vp, d_vp, picks)
    if not picks:
        return []
    if quota is not None and len(picks) > quota:
        raise QuotaExceeded()
    prepared = [_prepare(vp, pick, rng, group) for pick in picks]
    response = channel.exchange([a for _, _, a in prepared])
    if len(response) != len(picks):
        raise TransportError()
    return [_recover(d_vp, pick, x, r, b, group)
            for pick, (x, r, _), b in zip(picks, prepared, response)]


def verifier_disclose_adaptive(vp, d_vp, picker, quota, channel, rng=None, *,
                               group=SECP256K1):
    """One OPRF round per claim.

    ``picker(disclosed)`` receives the list of claims revealed so far and
    returns the next ``(credential_index, name)`` or ``None`` to stop. A pick
    beyond ``quota`` raises :class:`QuotaExceeded` without contacting the
    holder.
    """
    disclosed = []
    seen = set()
    while True:
        pick = picker(list(disclosed))
        if pick is None:
            return disclosed
        pick = (int(pick[0]), pick[1])
        if pick in seen:
            raise ValueError(f"duplicate pick {pick!r}")
        _check_selection(vp, d_vp, [pick])
        if len(disclosed) >= quota:
            raise QuotaExceeded()
        seen.add(pick)
        x, r, a = _prepare(vp, pick, rng, group)
        response = channel.exchange([a])
        if len(response) != 1:
            raise TransportError()
        disclosed.append(_recover(d_vp, pick, x, r, response[0], group))


def scripted_picker(picks):
    """Picker that replays a fixed selection; adaptive twin of a batch run."""
    picks = list(picks)

    def pick(disclosed):
        return picks[len(disclosed)] if len(disclosed) < len(picks) else None

    return pick
