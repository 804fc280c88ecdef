"""Frames, transports, and the holder/verifier conversation.

Frame layout (all integers big-endian)::

    u8 version | u8 kind | u16 len | session_id | u32 len | body

A conversation runs::

    verifier                                   holder
    HELLO(verifier_id, nonce_v)         ->
                                        <-     HELLO(holder_id, nonce_h, sig_h)
    AUTH(sig_v)                         ->
                                        <-     OFFER(vp, d_vp, quota, fresh, sig_h)
    OPRF_REQUEST(sid, a_1..a_k)         ->
                                        <-     OPRF_RESPONSE(sid, b_1..b_k) | ERROR
    ...
    CLOSE(sid)                          ->

Both signatures cover the handshake transcript hash, which is also mixed
into the session id; frames carrying any other session id are dropped.

Endpoints are ``loop:<name>`` (in-process, for tests) or
``tcp:<host>:<port>``.
"""

import enum
import hashlib
import logging
import queue
import secrets
import socket
import struct
import threading
from dataclasses import dataclass

from .disclosure import holder_evaluate, holder_open_session, session_binding
from .encoding import Reader, Writer, frame_bytes
from .errors import (
    BodyTooLarge,
    DecodeError,
    HandshakeFailure,
    InvalidElement,
    ProtocolError,
    QuotaExceeded,
    SessionClosed,
    TransportError,
)
from .group import SECP256K1
from .presentation import PresentationData, VerifiablePresentation, validate_presentation

log = logging.getLogger(__name__)

VERSION = 1
DEFAULT_MAX_BODY = 16 * 1024 * 1024
NONCE_SIZE = 32
HEADER_SIZE = 8  # version + kind + u16 sid length + u32 body length


class Kind(enum.IntEnum):
    OFFER = 1
    OPRF_REQUEST = 2
    OPRF_RESPONSE = 3
    ERROR = 4
    CLOSE = 5
    HELLO = 6
    AUTH = 7


_NO_SESSION = {Kind.OFFER, Kind.HELLO, Kind.AUTH}
_NEEDS_SESSION = {Kind.OPRF_REQUEST, Kind.OPRF_RESPONSE, Kind.CLOSE}


class ErrorCode(enum.IntEnum):
    QUOTA_EXCEEDED = 1
    SESSION_CLOSED = 2
    REJECTED = 3


@dataclass(frozen=True)
class Frame:
    kind: Kind
    session_id: bytes = b""
    body: bytes = b""
    version: int = VERSION


# -- element lists -------------------------------------------------------

def encode_elements(elements) -> bytes:
    w = Writer().u32(len(elements))
    for e in elements:
        w.short(e)
    return w.getvalue()


def decode_elements(body: bytes, group=SECP256K1):
    r = Reader(body)
    count = r.u32()
    if count == 0 or count > r.remaining():
        raise DecodeError(0)
    elements = []
    for _ in range(count):
        start = r.pos
        e = r.short()
        try:
            group.decode(e)
        except InvalidElement:
            raise DecodeError(start) from None
        elements.append(e)
    r.done()
    return elements


def elements_body_size(count: int, group=SECP256K1) -> int:
    return 4 + count * (group.element_size + 1)


# -- frame codec ---------------------------------------------------------

def _check_body(kind, body, group):
    if kind in (Kind.OPRF_REQUEST, Kind.OPRF_RESPONSE):
        decode_elements(body, group)
    elif kind is Kind.ERROR:
        if len(body) != 1 or body[0] not in ErrorCode._value2member_map_:
            raise DecodeError(HEADER_SIZE)
    elif kind is Kind.CLOSE:
        if body:
            raise DecodeError(HEADER_SIZE)
    elif kind is Kind.OFFER:
        OfferBody.decode(body)
    elif kind is Kind.HELLO:
        Hello.decode(body)
    elif kind is Kind.AUTH:
        r = Reader(body)
        r.short()
        r.done()


def encode_frame(frame: Frame, max_body: int = DEFAULT_MAX_BODY) -> bytes:
    if len(frame.body) > max_body:
        raise BodyTooLarge()
    kind = Kind(frame.kind)
    if kind in _NO_SESSION and frame.session_id:
        raise ValueError(f"{kind.name} frames carry no session id")
    if kind in _NEEDS_SESSION and not frame.session_id:
        raise ValueError(f"{kind.name} frames need a session id")
    return (struct.pack(">BBH", frame.version, kind, len(frame.session_id))
            + frame.session_id + struct.pack(">I", len(frame.body)) + frame.body)


def decode_frame(data: bytes, max_body: int = DEFAULT_MAX_BODY, group=SECP256K1) -> Frame:
    """Total parser: any input yields a :class:`Frame` or :class:`DecodeError`."""
    r = Reader(data)
    version = r.u8()
    if version != VERSION:
        raise DecodeError(0)
    try:
        kind = Kind(r.u8())
    except ValueError:
        raise DecodeError(1) from None
    session_id = r.raw(r.u16())
    if (kind in _NO_SESSION and session_id) or (kind in _NEEDS_SESSION and not session_id):
        raise DecodeError(2)
    length = r.u32()
    if length > max_body:
        raise DecodeError(r.pos)
    body = r.raw(length)
    r.done()
    try:
        _check_body(kind, body, group)
    except (DecodeError, ValueError):
        raise DecodeError(r.pos) from None
    return Frame(kind, session_id, body, version)


# -- message bodies ------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    party_id: str
    nonce: bytes
    signature: bytes = b""

    def encode(self) -> bytes:
        return Writer().text(self.party_id).short(self.nonce).short(self.signature).getvalue()

    @classmethod
    def decode(cls, body: bytes) -> "Hello":
        r = Reader(body)
        hello = cls(r.text(), r.short(), r.short())
        r.done()
        if not hello.party_id or len(hello.nonce) != NONCE_SIZE:
            raise DecodeError(0)
        return hello


@dataclass(frozen=True)
class OfferBody:
    vp: bytes
    d_vp: bytes
    quota: int
    fresh_nonce: bytes
    signature: bytes = b""

    def signed_part(self, transcript: bytes) -> bytes:
        return b"OSD-offer" + frame_bytes(transcript, self.vp, self.d_vp,
                                          struct.pack(">I", self.quota), self.fresh_nonce)

    def encode(self) -> bytes:
        return (Writer().blob(self.vp).blob(self.d_vp).u32(self.quota)
                .short(self.fresh_nonce).short(self.signature).getvalue())

    @classmethod
    def decode(cls, body: bytes) -> "OfferBody":
        r = Reader(body)
        offer = cls(r.blob(), r.blob(), r.u32(), r.short(), r.short())
        r.done()
        if offer.quota < 1 or len(offer.fresh_nonce) != NONCE_SIZE:
            raise DecodeError(0)
        return offer


def error_frame(code: ErrorCode, session_id: bytes = b"") -> Frame:
    return Frame(Kind.ERROR, session_id, bytes([code]))


def raise_for_error(frame: Frame):
    code = frame.body[0]
    if code == ErrorCode.QUOTA_EXCEEDED:
        raise QuotaExceeded()
    if code == ErrorCode.SESSION_CLOSED:
        raise SessionClosed()
    raise TransportError()


# -- transports ----------------------------------------------------------

class Connection:
    """Ordered, reliable frame pipe. Subclasses move raw frame bytes."""

    max_body = DEFAULT_MAX_BODY
    timeout = 30.0

    def send(self, frame: Frame) -> None:
        self.send_raw(encode_frame(frame, self.max_body))

    def recv(self, timeout=None) -> Frame:
        return decode_frame(self.recv_raw(self.timeout if timeout is None else timeout),
                            self.max_body)

    def send_raw(self, data: bytes) -> None:
        raise NotImplementedError

    def recv_raw(self, timeout) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LoopConnection(Connection):
    _CLOSED = object()

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self.inbox = inbox
        self.outbox = outbox
        self.closed = False

    @classmethod
    def pair(cls):
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b), cls(b, a)

    def send_raw(self, data: bytes) -> None:
        if self.closed:
            raise TransportError()
        self.outbox.put(bytes(data))

    def recv_raw(self, timeout) -> bytes:
        try:
            item = self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError() from None
        if item is self._CLOSED:
            self.inbox.put(item)
            raise TransportError()
        return item

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self.outbox.put(self._CLOSED)


class TcpConnection(Connection):
    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send_raw(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError:
            raise TransportError() from None

    def _read(self, n: int) -> bytes:
        chunks, remaining = [], n
        while remaining:
            chunk = self.sock.recv(remaining)
            if not chunk:
                raise TransportError()
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_raw(self, timeout) -> bytes:
        try:
            self.sock.settimeout(timeout)
            head = self._read(4)
            sid = self._read(struct.unpack(">H", head[2:4])[0])
            length_bytes = self._read(4)
            length = struct.unpack(">I", length_bytes)[0]
            if length > self.max_body:
                raise TransportError()
            return head + sid + length_bytes + self._read(length)
        except OSError:
            raise TransportError() from None

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class Listener:
    def accept(self, timeout=None) -> Connection:
        raise NotImplementedError

    def close(self) -> None:
        pass


_loop_registry = {}
_loop_lock = threading.Lock()


class LoopListener(Listener):
    def __init__(self, name: str):
        self.name = name
        self.pending = queue.Queue()

    def accept(self, timeout=None) -> Connection:
        try:
            return self.pending.get(timeout=timeout)
        except queue.Empty:
            raise TransportError() from None

    def close(self) -> None:
        with _loop_lock:
            if _loop_registry.get(self.name) is self:
                del _loop_registry[self.name]


class TcpListener(Listener):
    def __init__(self, host: str, port: int):
        self.sock = socket.create_server((host, port), reuse_port=False)
        self.address = self.sock.getsockname()

    def accept(self, timeout=None) -> Connection:
        self.sock.settimeout(timeout)
        try:
            conn, _ = self.sock.accept()
        except OSError:
            raise TransportError() from None
        conn.settimeout(None)
        return TcpConnection(conn)

    def close(self) -> None:
        self.sock.close()


def parse_endpoint(endpoint: str):
    scheme, _, rest = endpoint.partition(":")
    if scheme == "loop" and rest:
        return "loop", rest
    if scheme == "tcp":
        host, _, port = rest.rpartition(":")
        if host and port.isdigit() and int(port) < 65536:
            return "tcp", (host, int(port))
    raise ValueError(f"bad endpoint {endpoint!r}; expected loop:<name> or tcp:<host>:<port>")


def transport_serve(endpoint: str) -> Listener:
    scheme, where = parse_endpoint(endpoint)
    if scheme == "loop":
        with _loop_lock:
            if where in _loop_registry:
                raise TransportError("endpoint already bound")
            listener = _loop_registry[where] = LoopListener(where)
        return listener
    try:
        return TcpListener(*where)
    except OSError:
        raise TransportError() from None


def transport_connect(endpoint: str, timeout: float = 10.0) -> Connection:
    scheme, where = parse_endpoint(endpoint)
    if scheme == "loop":
        with _loop_lock:
            listener = _loop_registry.get(where)
        if listener is None:
            raise TransportError()
        client, server = LoopConnection.pair()
        listener.pending.put(server)
        return client
    try:
        return TcpConnection(socket.create_connection(where, timeout=timeout))
    except OSError:
        raise TransportError() from None


class InterceptingConnection(Connection):
    """Wraps a connection and lets a callback rewrite, drop, or inject raw
    frames on the way out or in. Models the network adversary in tests."""

    def __init__(self, inner: Connection, on_send=None, on_recv=None):
        self.inner = inner
        self.on_send = on_send
        self.on_recv = on_recv
        self.injected = []

    def send_raw(self, data: bytes) -> None:
        if self.on_send is not None:
            data = self.on_send(data)
            if data is None:
                return
        self.inner.send_raw(data)

    def recv_raw(self, timeout) -> bytes:
        if self.injected:
            return self.injected.pop(0)
        data = self.inner.recv_raw(timeout)
        return data if self.on_recv is None else self.on_recv(data)

    def close(self) -> None:
        self.inner.close()


# -- handshake -----------------------------------------------------------

def _transcript(verifier: Hello, holder_id: str, holder_nonce: bytes) -> bytes:
    return hashlib.sha3_256(b"OSD-handshake" + frame_bytes(
        verifier.party_id.encode(), verifier.nonce, holder_id.encode(), holder_nonce)).digest()


def _recv_kind(conn: Connection, kind: Kind) -> Frame:
    try:
        frame = conn.recv()
    except DecodeError:
        raise HandshakeFailure() from None
    if frame.kind is not kind:
        raise HandshakeFailure()
    return frame


def client_handshake(conn: Connection, me, directory, expected_peer=None):
    """Verifier side. Returns ``(holder_id, transcript_hash)``."""
    mine = Hello(me.party_id, secrets.token_bytes(NONCE_SIZE))
    conn.send(Frame(Kind.HELLO, body=mine.encode()))
    try:
        theirs = Hello.decode(_recv_kind(conn, Kind.HELLO).body)
    except DecodeError:
        raise HandshakeFailure() from None
    if expected_peer is not None and theirs.party_id != expected_peer:
        raise HandshakeFailure()
    th = _transcript(mine, theirs.party_id, theirs.nonce)
    if not directory.verify(theirs.party_id, theirs.signature, b"OSD-hs-holder" + th):
        raise HandshakeFailure()
    conn.send(Frame(Kind.AUTH, body=Writer().short(me.sign(b"OSD-hs-verifier" + th)).getvalue()))
    return theirs.party_id, th


def server_handshake(conn: Connection, me, directory):
    """Holder side. Returns ``(verifier_id, transcript_hash)``."""
    try:
        theirs = Hello.decode(_recv_kind(conn, Kind.HELLO).body)
    except DecodeError:
        raise HandshakeFailure() from None
    if directory.lookup(theirs.party_id) is None:
        conn.send(error_frame(ErrorCode.REJECTED))
        raise HandshakeFailure()
    nonce = secrets.token_bytes(NONCE_SIZE)
    th = _transcript(theirs, me.party_id, nonce)
    conn.send(Frame(Kind.HELLO, body=Hello(me.party_id, nonce,
                                           me.sign(b"OSD-hs-holder" + th)).encode()))
    auth = _recv_kind(conn, Kind.AUTH)
    try:
        r = Reader(auth.body)
        signature = r.short()
        r.done()
    except DecodeError:
        raise HandshakeFailure() from None
    if not directory.verify(theirs.party_id, signature, b"OSD-hs-verifier" + th):
        raise HandshakeFailure()
    return theirs.party_id, th


# -- verifier side -------------------------------------------------------

class SessionChannel:
    """Verifier-side disclosure channel bound to one session id."""

    def __init__(self, conn: Connection, session_id: bytes):
        self.conn = conn
        self.session_id = session_id
        self.rounds = 0
        self.dropped = 0

    def _recv(self) -> Frame:
        while True:
            try:
                frame = self.conn.recv()
            except DecodeError:
                raise TransportError() from None
            if frame.session_id == self.session_id:
                return frame
            self.dropped += 1
            log.debug("dropped frame with foreign session id")

    def exchange(self, elements):
        self.rounds += 1
        self.conn.send(Frame(Kind.OPRF_REQUEST, self.session_id, encode_elements(elements)))
        frame = self._recv()
        if frame.kind is Kind.ERROR:
            raise_for_error(frame)
        if frame.kind is not Kind.OPRF_RESPONSE:
            raise TransportError()
        response = decode_elements(frame.body)
        if len(response) != len(elements):
            raise TransportError()
        return response

    def close(self) -> None:
        try:
            self.conn.send(Frame(Kind.CLOSE, self.session_id))
        except ProtocolError:
            pass


@dataclass
class VerifierSession:
    holder_id: str
    vp: VerifiablePresentation
    d_vp: PresentationData
    quota: int
    channel: SessionChannel

    @property
    def session_id(self) -> bytes:
        return self.channel.session_id

    def close(self) -> None:
        self.channel.close()


class OfferRejected(ProtocolError):
    message = "presentation rejected"

    def __init__(self, verdict=None):
        super().__init__()
        self.verdict = verdict


def open_verifier_session(conn: Connection, verifier, directory, *, now=None,
                          expected_holder=None) -> VerifierSession:
    """Handshake, receive and check the offer, derive the session id."""
    holder_id, th = client_handshake(conn, verifier, directory, expected_holder)
    try:
        frame = conn.recv()
        if frame.kind is not Kind.OFFER:
            raise OfferRejected()
        offer = OfferBody.decode(frame.body)
        vp = VerifiablePresentation.from_bytes(offer.vp)
        d_vp = PresentationData.from_bytes(offer.d_vp)
    except DecodeError:
        raise OfferRejected() from None
    if vp.metadata.holder_id != holder_id or not directory.verify(
            holder_id, offer.signature, offer.signed_part(th)):
        raise OfferRejected()
    verdict = validate_presentation(vp, d_vp, directory, audience=verifier.party_id, now=now)
    if not verdict:
        raise OfferRejected(verdict)
    sid = session_binding(vp.metadata.nonce, verifier.party_id, offer.fresh_nonce, th)
    return VerifierSession(holder_id, vp, d_vp, offer.quota, SessionChannel(conn, sid))


# -- holder side ---------------------------------------------------------

def serve_connection(conn: Connection, holder, directory, vp, d_vp, secret, quota: int):
    """Run one verifier conversation to completion. Returns the session."""
    verifier_id, th = server_handshake(conn, holder, directory)
    fresh = secrets.token_bytes(NONCE_SIZE)
    offer = OfferBody(vp.to_bytes(), d_vp.to_bytes(), quota, fresh)
    offer = OfferBody(offer.vp, offer.d_vp, quota, fresh, holder.sign(offer.signed_part(th)))
    conn.send(Frame(Kind.OFFER, body=offer.encode()))
    session = holder_open_session(secret, quota, verifier_id, vp.metadata.nonce, fresh,
                                  transcript=th)
    try:
        while True:
            try:
                frame = conn.recv()
            except DecodeError:
                session.rejected += 1
                conn.send(error_frame(ErrorCode.REJECTED, session.session_id))
                continue
            if frame.session_id != session.session_id:
                session.dropped += 1
                log.debug("dropped frame with foreign session id")
                continue
            if frame.kind is Kind.CLOSE:
                session.ending = "close"
                return session
            if frame.kind is not Kind.OPRF_REQUEST:
                session.rejected += 1
                conn.send(error_frame(ErrorCode.REJECTED, session.session_id))
                continue
            try:
                response = holder_evaluate(session, decode_elements(frame.body))
            except QuotaExceeded:
                conn.send(error_frame(ErrorCode.QUOTA_EXCEEDED, session.session_id))
                continue
            except SessionClosed:
                conn.send(error_frame(ErrorCode.SESSION_CLOSED, session.session_id))
                continue
            except (InvalidElement, DecodeError):
                session.rejected += 1
                conn.send(error_frame(ErrorCode.REJECTED, session.session_id))
                continue
            conn.send(Frame(Kind.OPRF_RESPONSE, session.session_id, encode_elements(response)))
    except TransportError:
        session.ending = "abort"
        return session
    finally:
        session.close()


class HolderServer:
    """Accepts verifier connections on a thread each; all sessions share the
    presentation's quota pool."""

    def __init__(self, listener: Listener, holder, directory, vp, d_vp, secret, quota: int):
        self.listener = listener
        self.args = (holder, directory, vp, d_vp, secret, quota)
        self.sessions = []
        self.failures = 0
        self._threads = []
        self._lock = threading.Lock()

    def _run(self, conn):
        try:
            session = serve_connection(conn, *self.args)
            with self._lock:
                self.sessions.append(session)
        except ProtocolError:
            with self._lock:
                self.failures += 1
        finally:
            conn.close()

    def serve(self, max_sessions=None, accept_timeout=None):
        """Accept until ``max_sessions`` conversations were started or the
        accept times out; then wait for all of them to finish."""
        started = 0
        try:
            while max_sessions is None or started < max_sessions:
                try:
                    conn = self.listener.accept(accept_timeout)
                except TransportError:
                    break
                t = threading.Thread(target=self._run, args=(conn,), daemon=True)
                t.start()
                self._threads.append(t)
                started += 1
        finally:
            for t in self._threads:
                t.join()
        return self.sessions
