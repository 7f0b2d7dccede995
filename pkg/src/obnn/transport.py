"""Framed transports with byte and round accounting.

Every message is one frame: a 1-byte type, a 4-byte little-endian length,
then the payload.  Frames arrive strictly in the protocol's fixed order,
so the receiver always knows which types are legal next and a mismatch is
a protocol error, not a dispatch decision.

Both transports keep counters: bytes sent/received (headers included) and
``direction_changes``, the number of times the traffic flips between
sending and receiving.  A constant-round protocol shows a constant value
there regardless of circuit depth; the session report exposes it as
``rounds``.
"""

from __future__ import annotations

import queue
import socket
import struct

MSG_CIRCUIT_META = 1
MSG_GARBLER_LABELS = 2
MSG_AND_TABLES = 3
MSG_OT = 4
MSG_DECODE_TABLE = 5
MSG_OUTPUT_ACK = 6

_HEADER = struct.Struct("<BI")

MSG_NAMES = {
    MSG_CIRCUIT_META: "CIRCUIT_META",
    MSG_GARBLER_LABELS: "GARBLER_LABELS",
    MSG_AND_TABLES: "AND_TABLES",
    MSG_OT: "OT_MSG",
    MSG_DECODE_TABLE: "DECODE_TABLE",
    MSG_OUTPUT_ACK: "OUTPUT_ACK",
}


class ProtocolError(RuntimeError):
    """Framing, ordering, or endpoint-disagreement failure."""


class Transport:
    """Base framing plus accounting; subclasses move raw bytes."""

    def __init__(self):
        self.bytes_sent = 0
        self.bytes_received = 0
        self.direction_changes = 0
        self._last_op = None

    def _record(self, op, nbytes):
        if self._last_op is not None and self._last_op != op:
            self.direction_changes += 1
        self._last_op = op
        if op == "s":
            self.bytes_sent += nbytes
        else:
            self.bytes_received += nbytes

    def send_frame(self, mtype: int, payload: bytes):
        frame = _HEADER.pack(mtype, len(payload)) + payload
        self._send_raw(frame)
        self._record("s", len(frame))

    def recv_frame(self, expect=None):
        header = self._recv_exact(_HEADER.size)
        mtype, length = _HEADER.unpack(header)
        payload = self._recv_exact(length)
        self._record("r", _HEADER.size + length)
        if expect is not None:
            allowed = expect if isinstance(expect, (set, tuple, frozenset)) else (expect,)
            if mtype not in allowed:
                want = "/".join(MSG_NAMES.get(e, str(e)) for e in allowed)
                raise ProtocolError(
                    f"expected {want} frame, got {MSG_NAMES.get(mtype, mtype)}"
                )
        return mtype, payload

    def _send_raw(self, data: bytes):
        raise NotImplementedError

    def _recv_exact(self, n: int) -> bytes:
        raise NotImplementedError

    def close(self):
        pass


class TcpTransport(Transport):
    """Frames over a connected TCP socket."""

    def __init__(self, sock: socket.socket):
        super().__init__()
        self._sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send_raw(self, data):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ProtocolError(f"send failed: {exc}") from exc

    def _recv_exact(self, n):
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 16))
            except OSError as exc:
                raise ProtocolError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


def tcp_server(host: str, port: int) -> socket.socket:
    """Bind a listening socket; port 0 picks an ephemeral port."""
    return socket.create_server((host, port))


def tcp_accept(server: socket.socket) -> TcpTransport:
    """Accept exactly one peer and close the listener."""
    conn, _ = server.accept()
    server.close()
    return TcpTransport(conn)


def tcp_connect(host: str, port: int, timeout=10.0) -> TcpTransport:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ProtocolError(f"connect to {host}:{port} failed: {exc}") from exc
    sock.settimeout(None)
    return TcpTransport(sock)


class MemoryTransport(Transport):
    """In-process duplex endpoint over two queues; pairs come from memory_pair()."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        super().__init__()
        self._inbox = inbox
        self._outbox = outbox
        self._buffer = b""

    def _send_raw(self, data):
        self._outbox.put(bytes(data))

    def _recv_exact(self, n):
        while len(self._buffer) < n:
            try:
                chunk = self._inbox.get(timeout=60)
            except queue.Empty:
                raise ProtocolError("timed out waiting for peer") from None
            if chunk is None:
                raise ProtocolError("connection closed mid-frame")
            self._buffer += chunk
        data, self._buffer = self._buffer[:n], self._buffer[n:]
        return data

    def close(self):
        self._outbox.put(None)


def memory_pair():
    """Two connected in-memory endpoints."""
    q1, q2 = queue.Queue(), queue.Queue()
    return MemoryTransport(q1, q2), MemoryTransport(q2, q1)
