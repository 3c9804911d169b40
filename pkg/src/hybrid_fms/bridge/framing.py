"""Length-prefixed frames: 4-byte big-endian payload length, then payload."""
from __future__ import annotations

import socket
import struct

MAX_FRAME = 1 << 20
_HEADER = struct.Struct(">I")


class FrameError(Exception):
    pass


class OversizeFrame(FrameError):
    pass


class BrokenStream(FrameError):
    pass


def frame(payload: bytes, limit: int = MAX_FRAME) -> bytes:
    if len(payload) > limit:
        raise OversizeFrame(f"payload of {len(payload)} bytes exceeds limit {limit}")
    return _HEADER.pack(len(payload)) + payload


class Deframer:
    """Incremental decoder: feed arbitrary chunks, collect whole frames."""

    def __init__(self, limit: int = MAX_FRAME):
        self.limit = limit
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        out = []
        while len(self._buf) >= _HEADER.size:
            (n,) = _HEADER.unpack_from(self._buf)
            if n > self.limit:
                raise OversizeFrame(f"declared length {n} exceeds limit {self.limit}")
            end = _HEADER.size + n
            if len(self._buf) < end:
                break
            out.append(bytes(self._buf[_HEADER.size:end]))
            del self._buf[:end]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)

    def close(self) -> None:
        """Signal end of stream; leftover bytes mean a frame was cut short."""
        if self._buf:
            raise BrokenStream(f"stream ended inside a frame ({len(self._buf)} bytes buffered)")


def deframe(chunks, limit: int = MAX_FRAME) -> list[bytes]:
    d = Deframer(limit)
    out = []
    for c in chunks:
        out.extend(d.feed(c))
    d.close()
    return out


class FramedSocket:
    """Blocking frame I/O over a connected socket."""

    def __init__(self, sock: socket.socket, limit: int = MAX_FRAME):
        if sock.family in (socket.AF_INET, socket.AF_INET6):
            # small request/reply frames; don't let Nagle hold them back
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self.limit = limit
        self._d = Deframer(limit)
        self._ready: list[bytes] = []

    def send(self, payload: bytes) -> None:
        self.sock.sendall(frame(payload, self.limit))

    def recv(self) -> bytes:
        while not self._ready:
            chunk = self.sock.recv(65536)
            if not chunk:
                self._d.close()
                raise BrokenStream("peer closed the connection")
            self._ready.extend(self._d.feed(chunk))
        return self._ready.pop(0)

    def close(self) -> None:
        self.sock.close()
