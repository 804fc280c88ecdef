"""Deterministic length-prefixed binary encoding.

Every structure that gets signed, hashed, or put on the wire goes through
:class:`Writer` / :class:`Reader`, so byte layouts are fixed in one place.
Integers are big-endian.
"""

import struct

from .errors import DecodeError


def frame_bytes(*parts: bytes) -> bytes:
    """Concatenate ``parts``, each preceded by its 8-byte big-endian length."""
    out = bytearray()
    for part in parts:
        out += struct.pack(">Q", len(part))
        out += part
    return bytes(out)


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, value: int) -> "Writer":
        self._buf += struct.pack(">B", value)
        return self

    def u16(self, value: int) -> "Writer":
        self._buf += struct.pack(">H", value)
        return self

    def u32(self, value: int) -> "Writer":
        self._buf += struct.pack(">I", value)
        return self

    def u64(self, value: int) -> "Writer":
        self._buf += struct.pack(">Q", value)
        return self

    def raw(self, data: bytes) -> "Writer":
        self._buf += data
        return self

    def short(self, data: bytes) -> "Writer":
        """u8 length prefix; for small fixed-ish fields like group elements."""
        if len(data) > 0xFF:
            raise ValueError("short field longer than 255 bytes")
        self._buf += struct.pack(">B", len(data))
        self._buf += data
        return self

    def text(self, value: str) -> "Writer":
        data = value.encode("utf-8")
        if len(data) > 0xFFFF:
            raise ValueError("text field longer than 65535 bytes")
        self._buf += struct.pack(">H", len(data))
        self._buf += data
        return self

    def blob(self, data: bytes) -> "Writer":
        self._buf += struct.pack(">I", len(data))
        self._buf += data
        return self

    def getvalue(self) -> bytes:
        return bytes(self._buf)

    def __len__(self):
        return len(self._buf)


class Reader:
    """Cursor over a byte string. Every read is bounds-checked and raises
    :class:`DecodeError` rather than ``struct.error`` or ``IndexError``."""

    def __init__(self, data: bytes):
        self._data = memoryview(bytes(data))
        self.pos = 0

    def _take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self._data):
            raise DecodeError(self.pos, truncated=True)
        chunk = self._data[self.pos:end].tobytes()
        self.pos = end
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def short(self) -> bytes:
        return self._take(self.u8())

    def text(self) -> str:
        start = self.pos
        data = self._take(self.u16())
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(start) from None

    def blob(self) -> bytes:
        return self._take(self.u32())

    def remaining(self) -> int:
        return len(self._data) - self.pos

    def done(self) -> None:
        if self.remaining():
            raise DecodeError(self.pos)
