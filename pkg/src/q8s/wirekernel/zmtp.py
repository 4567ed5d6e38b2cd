"""Minimal message-queue socket layer (ZMTP 3.0, NULL security) over TCP.

Implements just enough of the wire protocol for a kernel server and a
scripted frontend: ROUTER and PUB listeners plus client sockets (DEALER,
SUB, REQ-style echo probe). Frames, greetings, and the READY handshake
follow the standard framing so off-the-shelf clients can connect.

Subscriptions are honored in both dialects: 3.0-style subscribe messages
(first byte 0x01/0x00) and 3.1-style SUBSCRIBE/CANCEL commands.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading

logger = logging.getLogger(__name__)

FLAG_MORE = 0x01
FLAG_LONG = 0x02
FLAG_COMMAND = 0x04

GREETING_SIZE = 64
_SIGNATURE_PREFIX = b"\xff\x00\x00\x00\x00\x00\x00\x00\x00\x7f"


class ConnectionClosed(Exception):
    pass


def _greeting() -> bytes:
    # as-server is always 0 under the NULL security mechanism.
    mechanism = b"NULL" + b"\x00" * 16
    return _SIGNATURE_PREFIX + bytes([3, 0]) + mechanism + b"\x00" + b"\x00" * 31


def _read_exact(conn: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        data = conn.recv(remaining)
        if not data:
            raise ConnectionClosed()
        chunks.append(data)
        remaining -= len(data)
    return b"".join(chunks)


def _write_frame(conn: socket.socket, body: bytes, *, more: bool, command: bool = False) -> None:
    flags = (FLAG_MORE if more else 0) | (FLAG_COMMAND if command else 0)
    if len(body) > 255:
        conn.sendall(bytes([flags | FLAG_LONG]) + struct.pack(">Q", len(body)) + body)
    else:
        conn.sendall(bytes([flags, len(body)]) + body)


def _read_frame(conn: socket.socket) -> tuple[int, bytes]:
    flags = _read_exact(conn, 1)[0]
    if flags & FLAG_LONG:
        (size,) = struct.unpack(">Q", _read_exact(conn, 8))
    else:
        size = _read_exact(conn, 1)[0]
    return flags, _read_exact(conn, size)


def _metadata(properties: dict[str, bytes]) -> bytes:
    out = b""
    for name, value in properties.items():
        encoded = name.encode("ascii")
        out += bytes([len(encoded)]) + encoded + struct.pack(">I", len(value)) + value
    return out


def _parse_metadata(body: bytes) -> dict[str, bytes]:
    props: dict[str, bytes] = {}
    i = 0
    while i < len(body):
        name_len = body[i]
        name = body[i + 1 : i + 1 + name_len].decode("ascii", "replace")
        i += 1 + name_len
        (value_len,) = struct.unpack(">I", body[i : i + 4])
        props[name] = body[i + 4 : i + 4 + value_len]
        i += 4 + value_len
    return props


def _ready_command(socket_type: str, identity: bytes | None = None) -> bytes:
    props = {"Socket-Type": socket_type.encode("ascii")}
    if identity:
        props["Identity"] = identity
    return b"\x05READY" + _metadata(props)


def _parse_command(body: bytes) -> tuple[str, bytes]:
    name_len = body[0]
    return body[1 : 1 + name_len].decode("ascii", "replace"), body[1 + name_len :]


def _handshake(conn: socket.socket, socket_type: str, identity: bytes | None) -> dict[str, bytes]:
    """Exchange greetings and READY commands; returns the peer's properties."""
    conn.sendall(_greeting())
    greeting = _read_exact(conn, GREETING_SIZE)
    if greeting[0] != 0xFF or greeting[9] != 0x7F:
        raise ConnectionClosed("bad greeting signature")
    mechanism = greeting[12:32].rstrip(b"\x00")
    if mechanism != b"NULL":
        raise ConnectionClosed(f"unsupported security mechanism {mechanism!r}")
    _write_frame(conn, _ready_command(socket_type, identity), more=False, command=True)
    while True:
        flags, body = _read_frame(conn)
        if not flags & FLAG_COMMAND:
            raise ConnectionClosed("expected READY before messages")
        name, rest = _parse_command(body)
        if name == "READY":
            return _parse_metadata(rest)
        if name == "ERROR":
            raise ConnectionClosed(f"peer error: {rest[1:].decode('utf-8', 'replace')}")
        # Ignore anything else (e.g. PING) until READY arrives.


class _Connection:
    """One handshaken peer connection with a write lock."""

    def __init__(self, conn: socket.socket, identity: bytes) -> None:
        self.conn = conn
        self.identity = identity
        self.write_lock = threading.Lock()
        self.subscriptions: set[bytes] = set()
        self.alive = True

    def send_multipart(self, frames: list[bytes]) -> None:
        with self.write_lock:
            for i, frame in enumerate(frames):
                _write_frame(self.conn, frame, more=i < len(frames) - 1)

    def close(self) -> None:
        self.alive = False
        try:
            self.conn.close()
        except OSError:
            pass

    def read_message(self) -> list[bytes]:
        """Next complete multipart message, transparently answering commands."""
        frames: list[bytes] = []
        while True:
            flags, body = _read_frame(self.conn)
            if flags & FLAG_COMMAND:
                self._handle_command(body)
                continue
            frames.append(body)
            if not flags & FLAG_MORE:
                return frames

    def _handle_command(self, body: bytes) -> None:
        name, rest = _parse_command(body)
        if name == "SUBSCRIBE":
            self.subscriptions.add(rest)
        elif name == "CANCEL":
            self.subscriptions.discard(rest)
        elif name == "PING":
            context = rest[2:] if len(rest) >= 2 else b""
            with self.write_lock:
                _write_frame(self.conn, b"\x04PONG" + context, more=False, command=True)
        # READY duplicates and unknown commands are ignored.


class _ListeningSocket:
    """Common accept-loop machinery for the server-side socket types."""

    socket_type = "ROUTER"

    def __init__(self, host: str, port: int) -> None:
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.port = self._listener.getsockname()[1]
        self._peers: dict[bytes, _Connection] = {}
        self._peers_lock = threading.Lock()
        self._closed = threading.Event()
        self._auto_id = 0
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._setup_peer, args=(conn,), daemon=True).start()

    def _setup_peer(self, conn: socket.socket) -> None:
        try:
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            props = _handshake(conn, self.socket_type, None)
        except (ConnectionClosed, OSError) as exc:
            logger.debug("handshake failed: %s", exc)
            conn.close()
            return
        identity = props.get("Identity") or b""
        if not identity:
            with self._peers_lock:
                self._auto_id += 1
                identity = b"\x00q8s-" + str(self._auto_id).encode()
        peer = _Connection(conn, identity)
        with self._peers_lock:
            self._peers[identity] = peer
        self._on_peer(peer)

    def _on_peer(self, peer: _Connection) -> None:
        raise NotImplementedError

    def _drop_peer(self, peer: _Connection) -> None:
        with self._peers_lock:
            self._peers.pop(peer.identity, None)
        peer.close()

    def close(self) -> None:
        self._closed.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._peers_lock:
            peers = list(self._peers.values())
        for peer in peers:
            peer.close()


class RouterSocket(_ListeningSocket):
    """Request socket: receives (identity, frames), routes replies by identity."""

    socket_type = "ROUTER"

    def __init__(self, host: str, port: int) -> None:
        self._inbox: queue.Queue[tuple[bytes, list[bytes]]] = queue.Queue()
        super().__init__(host, port)

    def _on_peer(self, peer: _Connection) -> None:
        def reader() -> None:
            try:
                while True:
                    self._inbox.put((peer.identity, peer.read_message()))
            except (ConnectionClosed, OSError):
                self._drop_peer(peer)

        threading.Thread(target=reader, daemon=True).start()

    def recv(self, timeout: float | None = None) -> tuple[bytes, list[bytes]]:
        return self._inbox.get(timeout=timeout)

    def send(self, identity: bytes, frames: list[bytes]) -> None:
        with self._peers_lock:
            peer = self._peers.get(identity)
        if peer is None:
            logger.debug("dropping reply to departed peer %r", identity)
            return
        try:
            peer.send_multipart(frames)
        except OSError:
            self._drop_peer(peer)


class PubSocket(_ListeningSocket):
    """Broadcast socket honoring per-peer topic-prefix subscriptions."""

    socket_type = "PUB"

    def _on_peer(self, peer: _Connection) -> None:
        def reader() -> None:
            try:
                while True:
                    frames = peer.read_message()
                    # 3.0 dialect: subscriptions arrive as messages.
                    if frames and frames[0][:1] == b"\x01":
                        peer.subscriptions.add(frames[0][1:])
                    elif frames and frames[0][:1] == b"\x00":
                        peer.subscriptions.discard(frames[0][1:])
            except (ConnectionClosed, OSError):
                self._drop_peer(peer)

        threading.Thread(target=reader, daemon=True).start()

    def send(self, frames: list[bytes]) -> None:
        topic = frames[0] if frames else b""
        with self._peers_lock:
            peers = list(self._peers.values())
        for peer in peers:
            if not any(topic.startswith(sub) for sub in peer.subscriptions):
                continue
            try:
                peer.send_multipart(frames)
            except OSError:
                self._drop_peer(peer)

    def subscriber_count(self) -> int:
        with self._peers_lock:
            return sum(1 for p in self._peers.values() if p.subscriptions)


class EchoSocket(_ListeningSocket):
    """Heartbeat endpoint: echoes every multipart message verbatim."""

    socket_type = "REP"

    def _on_peer(self, peer: _Connection) -> None:
        def reader() -> None:
            try:
                while True:
                    peer.send_multipart(peer.read_message())
            except (ConnectionClosed, OSError):
                self._drop_peer(peer)

        threading.Thread(target=reader, daemon=True).start()


class ClientSocket:
    """Connecting socket for scripted frontends (DEALER, SUB, or REQ)."""

    def __init__(self, socket_type: str, identity: bytes | None = None) -> None:
        if socket_type not in ("DEALER", "SUB", "REQ"):
            raise ValueError(f"unsupported client socket type {socket_type}")
        self.socket_type = socket_type
        self.identity = identity
        self._conn: socket.socket | None = None
        self._peer: _Connection | None = None
        self._inbox: queue.Queue[list[bytes]] = queue.Queue()

    def connect(self, host: str, port: int, timeout: float = 5.0) -> "ClientSocket":
        conn = socket.create_connection((host, port), timeout=timeout)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        _handshake(conn, self.socket_type, self.identity)
        conn.settimeout(None)
        self._conn = conn
        self._peer = _Connection(conn, self.identity or b"")
        threading.Thread(target=self._reader, daemon=True).start()
        return self

    def _reader(self) -> None:
        assert self._peer is not None
        try:
            while True:
                self._inbox.put(self._peer.read_message())
        except (ConnectionClosed, OSError):
            pass

    def subscribe(self, prefix: bytes = b"") -> None:
        assert self._peer is not None and self.socket_type == "SUB"
        self._peer.send_multipart([b"\x01" + prefix])

    def send_multipart(self, frames: list[bytes]) -> None:
        assert self._peer is not None
        if self.socket_type == "REQ":
            frames = [b""] + frames
        self._peer.send_multipart(frames)

    def recv_multipart(self, timeout: float | None = 10.0) -> list[bytes]:
        frames = self._inbox.get(timeout=timeout)
        if self.socket_type == "REQ" and frames and frames[0] == b"":
            return frames[1:]
        return frames

    def close(self) -> None:
        if self._peer is not None:
            self._peer.close()
