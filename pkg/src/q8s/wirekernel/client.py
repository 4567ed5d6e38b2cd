"""Scripted frontend: the minimal client used by tests and smoke checks."""

from __future__ import annotations

import queue
import time
import uuid

from q8s.wirekernel import messaging, zmtp
from q8s.wirekernel.messaging import ConnectionInfo, WireMessage


class KernelFrontend:
    """Connects shell/iopub/heartbeat to a kernel and drives requests."""

    def __init__(self, info: ConnectionInfo) -> None:
        self.info = info
        self.session = uuid.uuid4().hex
        self.shell = zmtp.ClientSocket("DEALER").connect(info.ip, info.shell_port)
        self.iopub = zmtp.ClientSocket("SUB").connect(info.ip, info.iopub_port)
        self.iopub.subscribe(b"")
        self.hb = zmtp.ClientSocket("REQ").connect(info.ip, info.hb_port)

    def close(self) -> None:
        for sock in (self.shell, self.iopub, self.hb):
            sock.close()

    def __enter__(self) -> "KernelFrontend":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- plumbing --------------------------------------------------------------

    def _request(self, msg_type: str, content: dict) -> dict:
        header = messaging.make_header(msg_type, self.session, username="frontend")
        msg = WireMessage(header=header, content=content)
        self.shell.send_multipart(msg.to_frames(self.info.key))
        return header

    def recv_shell(self, timeout: float = 15.0) -> WireMessage:
        return WireMessage.from_frames(self.shell.recv_multipart(timeout), self.info.key)

    def recv_iopub(self, timeout: float = 15.0) -> WireMessage:
        return WireMessage.from_frames(self.iopub.recv_multipart(timeout), self.info.key)

    def ping(self, timeout: float = 5.0) -> bool:
        self.hb.send_multipart([b"ping"])
        return self.hb.recv_multipart(timeout) == [b"ping"]

    def wait_until_ready(self, timeout: float = 10.0) -> None:
        """Poke kernel_info until our iopub subscription demonstrably works."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            header = self._request("kernel_info_request", {})
            try:
                reply = self.recv_shell(timeout=2.0)
            except queue.Empty:
                continue
            assert reply.msg_type == "kernel_info_reply"
            try:
                while True:
                    msg = self.recv_iopub(timeout=1.0)
                    if msg.parent_header.get("msg_id") != header["msg_id"]:
                        continue
                    is_idle = (
                        msg.msg_type == "status"
                        and msg.content.get("execution_state") == "idle"
                    )
                    if not is_idle:
                        self.drain_iopub(parent_id=header["msg_id"])
                    return
            except queue.Empty:
                continue
        raise TimeoutError("iopub subscription never became active")

    def drain_iopub(self, parent_id: str, timeout: float = 2.0) -> list[WireMessage]:
        """Collect iopub messages for a parent until its idle status."""
        collected: list[WireMessage] = []
        while True:
            msg = self.recv_iopub(timeout)
            if msg.parent_header.get("msg_id") != parent_id:
                continue
            collected.append(msg)
            if msg.msg_type == "status" and msg.content.get("execution_state") == "idle":
                return collected

    # -- requests ----------------------------------------------------------------

    def kernel_info(self) -> tuple[dict, WireMessage]:
        header = self._request("kernel_info_request", {})
        reply = self.recv_shell()
        self.drain_iopub(parent_id=header["msg_id"], timeout=5.0)
        return header, reply

    def execute(self, code: str, timeout: float = 60.0) -> tuple[dict, WireMessage, list[WireMessage]]:
        """Run a cell; returns (request header, execute_reply, iopub messages)."""
        header = self._request("execute_request", {"code": code, "silent": False})
        iopub = self.drain_iopub(parent_id=header["msg_id"], timeout=timeout)
        reply = self.recv_shell(timeout=timeout)
        assert reply.msg_type == "execute_reply", reply.msg_type
        return header, reply, iopub

    def shutdown(self) -> WireMessage:
        self._request("shutdown_request", {"restart": False})
        return self.recv_shell()
