"""Kernel wire-message packing: connection files, HMAC signing, framing.

Messages are framed as [identities..., delimiter, signature, header,
parent_header, metadata, content]; the signature is hex HMAC-SHA256 over
the four JSON payload frames in order, protocol version 5.3.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import socket
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

PROTOCOL_VERSION = "5.3"
DELIMITER = b"<IDS|MSG>"
SIGNATURE_SCHEME = "hmac-sha256"


class ProtocolError(Exception):
    pass


class BadSignature(ProtocolError):
    pass


@dataclass(frozen=True)
class ConnectionInfo:
    transport: str
    ip: str
    key: bytes
    shell_port: int
    iopub_port: int
    stdin_port: int
    control_port: int
    hb_port: int
    signature_scheme: str = SIGNATURE_SCHEME

    def __post_init__(self) -> None:
        if self.signature_scheme != SIGNATURE_SCHEME:
            raise ProtocolError(f"unsupported signature scheme {self.signature_scheme!r}")
        ports = [self.shell_port, self.iopub_port, self.stdin_port, self.control_port, self.hb_port]
        if len(set(ports)) != len(ports):
            raise ProtocolError(f"connection ports must be distinct: {ports}")


def pick_free_ports(count: int, host: str = "127.0.0.1") -> list[int]:
    """Bind-and-release OS-assigned ports; fine for loopback test setups."""
    sockets = []
    try:
        for _ in range(count):
            s = socket.socket()
            s.bind((host, 0))
            sockets.append(s)
        return [s.getsockname()[1] for s in sockets]
    finally:
        for s in sockets:
            s.close()


def generate_connection_info(ip: str = "127.0.0.1") -> ConnectionInfo:
    shell, iopub, stdin, control, hb = pick_free_ports(5, ip)
    return ConnectionInfo(
        transport="tcp",
        ip=ip,
        key=uuid.uuid4().hex.encode("ascii"),
        shell_port=shell,
        iopub_port=iopub,
        stdin_port=stdin,
        control_port=control,
        hb_port=hb,
    )


def load_connection_file(path: str | Path) -> ConnectionInfo:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ProtocolError(f"cannot read connection file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"connection file {path} is not valid JSON: {exc}") from exc
    try:
        return ConnectionInfo(
            transport=doc["transport"],
            ip=doc["ip"],
            key=str(doc["key"]).encode("ascii"),
            shell_port=int(doc["shell_port"]),
            iopub_port=int(doc["iopub_port"]),
            stdin_port=int(doc["stdin_port"]),
            control_port=int(doc["control_port"]),
            hb_port=int(doc["hb_port"]),
            signature_scheme=doc.get("signature_scheme", SIGNATURE_SCHEME),
        )
    except KeyError as exc:
        raise ProtocolError(f"connection file {path} missing key {exc}") from exc


def write_connection_file(path: str | Path, info: ConnectionInfo) -> None:
    doc = {
        "transport": info.transport,
        "ip": info.ip,
        "key": info.key.decode("ascii"),
        "signature_scheme": info.signature_scheme,
        "shell_port": info.shell_port,
        "iopub_port": info.iopub_port,
        "stdin_port": info.stdin_port,
        "control_port": info.control_port,
        "hb_port": info.hb_port,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _pack(doc: dict) -> bytes:
    return json.dumps(doc, separators=(",", ":"), default=str).encode("utf-8")


def sign(key: bytes, payload_frames: list[bytes]) -> bytes:
    mac = hmac.new(key, digestmod=hashlib.sha256)
    for frame in payload_frames:
        mac.update(frame)
    return mac.hexdigest().encode("ascii")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class WireMessage:
    header: dict
    parent_header: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    content: dict = field(default_factory=dict)
    identities: list[bytes] = field(default_factory=list)

    @property
    def msg_type(self) -> str:
        return self.header.get("msg_type", "")

    def to_frames(self, key: bytes) -> list[bytes]:
        payload = [
            _pack(self.header),
            _pack(self.parent_header),
            _pack(self.metadata),
            _pack(self.content),
        ]
        return [*self.identities, DELIMITER, sign(key, payload), *payload]

    @classmethod
    def from_frames(cls, frames: list[bytes], key: bytes) -> "WireMessage":
        try:
            delim = frames.index(DELIMITER)
        except ValueError:
            raise ProtocolError("missing delimiter frame") from None
        identities = frames[:delim]
        rest = frames[delim + 1 :]
        if len(rest) < 5:
            raise ProtocolError(f"expected signature plus 4 payload frames, got {len(rest)}")
        signature, payload = rest[0], rest[1:5]
        expected = sign(key, payload)
        if not hmac.compare_digest(signature, expected):
            raise BadSignature("HMAC signature mismatch")
        try:
            header, parent, metadata, content = (json.loads(f.decode("utf-8")) for f in payload)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"malformed JSON frame: {exc}") from exc
        return cls(
            header=header,
            parent_header=parent,
            metadata=metadata,
            content=content,
            identities=identities,
        )


def make_header(msg_type: str, session: str, username: str = "kernel") -> dict:
    return {
        "msg_id": uuid.uuid4().hex,
        "msg_type": msg_type,
        "username": username,
        "session": session,
        "date": utc_now_iso(),
        "version": PROTOCOL_VERSION,
    }
