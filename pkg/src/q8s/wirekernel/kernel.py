"""Kernel server: routes execute requests from any standard notebook
frontend into the dispatch pipeline.

The protocol subset is heartbeat, kernel_info, execute, and shutdown.
Shell requests are handled strictly one at a time in arrival order; every
request is bracketed by busy/idle status messages on the iopub channel.
A per-cell first line ``%%q8s target=cpu|gpu|qpu`` overrides the kernel's
configured default target.
"""

from __future__ import annotations

import json
import logging
import queue
import re
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

from q8s import __version__
from q8s.celldeps import CellTask
from q8s.clock import Clock
from q8s.clusterapi import ClusterConfig
from q8s.dispatch import (
    DEFAULT_POLL_INTERVAL_S,
    DEFAULT_TIMEOUT_S,
    DependencyConfig,
    Failure,
    ImageConfig,
    execute,
    execute_local,
    format_failure,
    resolve_cluster_config,
)
from q8s.simkit import DEFAULT_MEMORY_LIMIT_BYTES
from q8s.wirekernel import messaging, zmtp
from q8s.wirekernel.messaging import ConnectionInfo, WireMessage

logger = logging.getLogger(__name__)

KERNEL_DISPLAY_NAME = "Python Q8s kernel"
KERNELSPEC_NAME = "q8s"

_MAGIC_RE = re.compile(r"^%%q8s\s+target=(cpu|gpu|qpu)\s*$")


@dataclass
class KernelSettings:
    """Execution configuration the kernel applies to every cell."""

    default_target: str = "cpu"
    kubeconfig_path: str | None = None
    cluster_config: ClusterConfig | None = None
    deps_cfg: DependencyConfig | None = None
    image_cfg: ImageConfig = field(default_factory=ImageConfig)
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES
    poll_interval_s: float = DEFAULT_POLL_INTERVAL_S
    timeout_s: float = DEFAULT_TIMEOUT_S
    clock: Clock | None = None


def split_target_magic(code: str, default_target: str) -> tuple[str, str]:
    """Peel a leading %%q8s magic off the cell, returning (target, source)."""
    lines = code.splitlines(keepends=True)
    if lines:
        m = _MAGIC_RE.match(lines[0].strip())
        if m:
            return m.group(1), "".join(lines[1:])
    return default_target, code


class KernelServer:
    def __init__(self, connection: ConnectionInfo, settings: KernelSettings | None = None):
        self.connection = connection
        self.settings = settings or KernelSettings()
        self.session_id = messaging.make_header("x", "x")["msg_id"]
        self.execution_count = 0
        self.shutdown_event = threading.Event()
        host = connection.ip
        self.shell = zmtp.RouterSocket(host, connection.shell_port)
        self.control = zmtp.RouterSocket(host, connection.control_port)
        self.stdin = zmtp.RouterSocket(host, connection.stdin_port)
        self.iopub = zmtp.PubSocket(host, connection.iopub_port)
        self.heartbeat = zmtp.EchoSocket(host, connection.hb_port)
        self._iopub_lock = threading.Lock()

    # -- message plumbing -----------------------------------------------------

    def _publish(self, msg_type: str, content: dict, parent: dict) -> None:
        msg = WireMessage(
            header=messaging.make_header(msg_type, self.session_id),
            parent_header=parent,
            content=content,
            identities=[msg_type.encode("ascii")],
        )
        with self._iopub_lock:
            self.iopub.send(msg.to_frames(self.connection.key))

    def _reply(
        self, sock: zmtp.RouterSocket, identity: bytes, msg_type: str, content: dict, parent: dict
    ) -> None:
        msg = WireMessage(
            header=messaging.make_header(msg_type, self.session_id),
            parent_header=parent,
            content=content,
            identities=[identity],
        )
        sock.send(identity, msg.to_frames(self.connection.key))

    def _recv(self, sock: zmtp.RouterSocket, timeout: float) -> tuple[bytes, WireMessage] | None:
        try:
            identity, frames = sock.recv(timeout=timeout)
        except queue.Empty:
            return None
        try:
            msg = WireMessage.from_frames(frames, self.connection.key)
        except messaging.BadSignature:
            logger.warning("dropping message with bad HMAC signature")
            return None
        except messaging.ProtocolError as exc:
            logger.warning("protocol error: %s", exc)
            self._reply(
                sock,
                identity,
                "error_reply",
                {"status": "error", "ename": "ProtocolError", "evalue": str(exc), "traceback": []},
                {},
            )
            return None
        return identity, msg

    # -- request handlers -----------------------------------------------------

    def _kernel_info_content(self) -> dict:
        return {
            "status": "ok",
            "protocol_version": messaging.PROTOCOL_VERSION,
            "implementation": "q8s",
            "implementation_version": __version__,
            "language_info": {
                "name": "python",
                "version": "%d.%d.%d" % sys.version_info[:3],
                "mimetype": "text/x-python",
                "file_extension": ".py",
            },
            "banner": f"{KERNEL_DISPLAY_NAME} {__version__}",
        }

    def _run_cell(self, code: str) -> tuple[str, str, Failure | None]:
        """Execute one cell; returns (stdout, stderr, failure-or-None)."""
        target, source = split_target_magic(code, self.settings.default_target)
        if not source.strip():
            return "", "", None
        task = CellTask(source, target, "kernel")
        if target == "cpu":
            result = execute_local(
                task,
                memory_limit_bytes=self.settings.memory_limit_bytes,
                clock=self.settings.clock,
            )
        else:
            cfg = self.settings.cluster_config or resolve_cluster_config(
                self.settings.kubeconfig_path
            )
            result = execute(
                task,
                cfg,
                self.settings.deps_cfg,
                self.settings.image_cfg,
                poll_interval_s=self.settings.poll_interval_s,
                timeout_s=self.settings.timeout_s,
                clock=self.settings.clock,
            )
        if isinstance(result.outcome, Failure):
            stderr = result.outcome.stderr_text
            if not stderr.endswith("\n") and stderr:
                stderr += "\n"
            stderr += format_failure(result.outcome, result.job_name) + "\n"
            return "", stderr, result.outcome
        return result.outcome.stdout, "", None

    def _handle_execute(self, identity: bytes, msg: WireMessage) -> None:
        self.execution_count += 1
        parent = msg.header
        code = str(msg.content.get("code", ""))
        try:
            stdout, stderr, failure = self._run_cell(code)
        except Exception as exc:  # config errors etc. surface on stderr
            stdout, stderr = "", f"{exc}\n"
            failure = Failure(stderr_text=str(exc), exit_code=None, reason=type(exc).__name__)
        if stdout:
            self._publish("stream", {"name": "stdout", "text": stdout}, parent)
        if stderr:
            self._publish("stream", {"name": "stderr", "text": stderr}, parent)
        if failure is None:
            content = {
                "status": "ok",
                "execution_count": self.execution_count,
                "payload": [],
                "user_expressions": {},
            }
        else:
            content = {
                "status": "error",
                "execution_count": self.execution_count,
                "ename": failure.reason or "ExecutionFailed",
                "evalue": failure.stderr_text.splitlines()[0] if failure.stderr_text else "",
                "traceback": [],
            }
        self._reply(self.shell, identity, "execute_reply", content, parent)

    def _handle_shell(self, identity: bytes, msg: WireMessage) -> None:
        parent = msg.header
        self._publish("status", {"execution_state": "busy"}, parent)
        try:
            if msg.msg_type == "kernel_info_request":
                self._reply(self.shell, identity, "kernel_info_reply", self._kernel_info_content(), parent)
            elif msg.msg_type == "execute_request":
                self._handle_execute(identity, msg)
            elif msg.msg_type == "shutdown_request":
                self._reply(
                    self.shell,
                    identity,
                    "shutdown_reply",
                    {"status": "ok", "restart": bool(msg.content.get("restart"))},
                    parent,
                )
                self.shutdown_event.set()
            else:
                logger.info("ignoring unsupported shell request %s", msg.msg_type)
                self._reply(
                    self.shell,
                    identity,
                    msg.msg_type.replace("_request", "_reply"),
                    {"status": "error", "ename": "Unsupported", "evalue": msg.msg_type, "traceback": []},
                    parent,
                )
        finally:
            self._publish("status", {"execution_state": "idle"}, parent)

    def _shell_loop(self) -> None:
        while not self.shutdown_event.is_set():
            item = self._recv(self.shell, timeout=0.1)
            if item is None:
                continue
            identity, msg = item
            self._handle_shell(identity, msg)

    def _control_loop(self) -> None:
        while not self.shutdown_event.is_set():
            item = self._recv(self.control, timeout=0.1)
            if item is None:
                continue
            identity, msg = item
            if msg.msg_type == "shutdown_request":
                self._reply(
                    self.control,
                    identity,
                    "shutdown_reply",
                    {"status": "ok", "restart": bool(msg.content.get("restart"))},
                    msg.header,
                )
                self.shutdown_event.set()

    def run(self) -> None:
        """Serve until a shutdown request arrives."""
        threads = [
            threading.Thread(target=self._shell_loop, daemon=True, name="q8s-shell"),
            threading.Thread(target=self._control_loop, daemon=True, name="q8s-control"),
        ]
        for t in threads:
            t.start()
        try:
            self.shutdown_event.wait()
        finally:
            for t in threads:
                t.join(timeout=2.0)
            self.close()

    def close(self) -> None:
        self.shutdown_event.set()
        for sock in (self.shell, self.control, self.stdin, self.iopub, self.heartbeat):
            sock.close()


def serve_kernel(connection_file: str | Path, settings: KernelSettings | None = None) -> None:
    """Load the connection file and serve the kernel until shutdown."""
    info = messaging.load_connection_file(connection_file)
    server = KernelServer(info, settings)
    server.run()


def install_kernelspec(user_dir: str | Path) -> Path:
    """Write the q8s kernelspec under user_dir; returns the spec directory.

    Repeated installs overwrite byte-identically.
    """
    spec_dir = Path(user_dir) / KERNELSPEC_NAME
    try:
        spec_dir.mkdir(parents=True, exist_ok=True)
        spec = {
            "argv": [
                sys.executable,
                "-m",
                "q8s",
                "kernel",
                "--connection-file",
                "{connection_file}",
            ],
            "display_name": KERNEL_DISPLAY_NAME,
            "language": "python",
            "interrupt_mode": "message",
        }
        (spec_dir / "kernel.json").write_text(json.dumps(spec, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot install kernelspec under {user_dir}: {exc}") from exc
    return spec_dir


def default_kernelspec_dir() -> Path:
    return Path.home() / ".local" / "share" / "jupyter" / "kernels"
