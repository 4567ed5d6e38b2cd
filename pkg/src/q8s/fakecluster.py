"""In-process fake of the cluster API subset used by the dispatcher.

The fake serves the same REST paths as a real cluster over loopback HTTP
and models scheduling with an event timeline: each job's payload runs
eagerly at submission, and the phase reported to pollers is derived from
(create time + scheduling delay + GPU queueing + modeled duration) against
a pluggable clock. With a VirtualClock the entire lifecycle is exactly
reproducible; with the wall clock it behaves like a small busy cluster.

GPU jobs whose statevector would not fit the node's GPU memory are killed
with exit code 137 and reason OOMKilled, mirroring container semantics.
A statevector that exactly fills GPU memory also OOMs: the runtime needs
nonzero workspace beyond the raw amplitudes.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import yaml

from q8s.clock import Clock, VirtualClock, WallClock
from q8s.clusterapi import ClusterConfig, Insecure
from q8s.manifests import (
    GPU_RESOURCE_KEY,
    ConfigMapManifest,
    JobManifest,
    JobPhase,
    parse,
)
from q8s.payload import parse_sim_seconds, run_payload
from q8s.simkit import DEFAULT_MEMORY_LIMIT_BYTES, Precision, memory_estimate
from q8s import payload as payload_mod

TIMESTAMP_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)

# Desk-scale guard: the fake really simulates payloads in-process, so cap
# what it will attempt regardless of the modeled GPU memory.
DEFAULT_SIM_CAP_BYTES = 64 * 1024**2

_ECHO_DURATION_S = 0.01
_FAILED_RUN_DURATION_S = 0.05
_OOM_DURATION_S = 0.25

GIB = 1024**3


@dataclass(frozen=True)
class NodeSpec:
    """Capacity and behaviour of the fake's single node."""

    gpu_count: int = 1
    gpu_memory_bytes: int = 16 * GIB
    schedule_delay_ms: float = 200.0
    speed_factor: float = 1.0
    image_pull_delay_ms: float = 0.0
    # Extra scheduling delay per GiB requested above the threshold; models
    # a contended cluster reserving memory before admitting the pod.
    contention_threshold_bytes: int | None = None
    contention_ms_per_gib: float = 0.0

    def __post_init__(self) -> None:
        if self.gpu_count < 0 or self.gpu_memory_bytes < 0:
            raise ValueError("capacities must be non-negative")
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be positive")


PROFILES: dict[str, NodeSpec] = {
    # Single shared mobile workstation: modest GPU, idle cluster.
    "workstation": NodeSpec(
        gpu_count=1,
        gpu_memory_bytes=16 * GIB,
        schedule_delay_ms=200.0,
        speed_factor=2.0,
        image_pull_delay_ms=500.0,
    ),
    # Commercial cluster with an A100: faster device, contended scheduler.
    "cloud-a100": NodeSpec(
        gpu_count=1,
        gpu_memory_bytes=40 * GIB,
        schedule_delay_ms=1500.0,
        speed_factor=5.0,
        image_pull_delay_ms=1500.0,
        contention_threshold_bytes=memory_estimate(27, Precision.DOUBLE).bytes,
        contention_ms_per_gib=500.0,
    ),
}


@dataclass
class RunResult:
    exit_code: int
    stdout: str
    reason: str | None
    duration_s: float
    required_memory_bytes: int | None = None


def default_runner(
    manifest: JobManifest,
    configmap: ConfigMapManifest,
    node: NodeSpec,
    *,
    modeled_time: bool,
    sim_cap_bytes: int = DEFAULT_SIM_CAP_BYTES,
) -> RunResult:
    """Execute the job's main.py the way the container would.

    The duration fed into the scheduling timeline is the reported simulator
    time (already divided by the node's speed factor), or a small constant
    for non-simulating and failed payloads.
    """
    source = configmap.data["main.py"]
    required: int | None = None
    try:
        directive = payload_mod.find_directive(source)
    except payload_mod.DirectiveError:
        directive = None  # run_payload reports the diagnostic
    if directive is not None:
        required = memory_estimate(directive.n, Precision.DOUBLE).bytes

    gpu_job = manifest.resource_key == GPU_RESOURCE_KEY
    if gpu_job and required is not None and required >= node.gpu_memory_bytes:
        return RunResult(137, "", "OOMKilled", _OOM_DURATION_S, required)

    limit = min(node.gpu_memory_bytes, sim_cap_bytes) if gpu_job else min(
        DEFAULT_MEMORY_LIMIT_BYTES, sim_cap_bytes
    )
    outcome = run_payload(
        source,
        memory_limit_bytes=limit,
        speed_factor=node.speed_factor,
        modeled_time=modeled_time,
    )
    if outcome.exit_code != 0:
        return RunResult(
            outcome.exit_code, outcome.stdout, outcome.reason, _FAILED_RUN_DURATION_S, required
        )
    duration = parse_sim_seconds(outcome.stdout)
    if duration is None:
        duration = _ECHO_DURATION_S
    return RunResult(0, outcome.stdout, None, duration, required)


@dataclass
class _JobRecord:
    manifest: JobManifest
    created_at: float
    scheduled_at: float
    finished_at: float
    exit_code: int
    stdout: str
    reason: str | None
    uses_gpu: bool
    gpu_slot: int | None = None
    prev_slot_free_at: float | None = None

    def phase(self, now: float) -> JobPhase:
        if now < self.scheduled_at:
            return JobPhase.PENDING
        if now < self.finished_at:
            return JobPhase.RUNNING
        return JobPhase.SUCCEEDED if self.exit_code == 0 else JobPhase.FAILED


class _ClusterState:
    """All mutable cluster state behind one lock."""

    def __init__(self, node: NodeSpec, clock: Clock, *, modeled_time: bool, sim_cap_bytes: int):
        self.node = node
        self.clock = clock
        self.modeled_time = modeled_time
        self.sim_cap_bytes = sim_cap_bytes
        self.lock = threading.Lock()
        self.jobs: dict[str, _JobRecord] = {}
        self.configmaps: dict[str, ConfigMapManifest] = {}
        self.gpu_free_at: list[float] = [0.0] * node.gpu_count
        self.seen_image_tags: set[str] = set()
        self.total_jobs_created = 0

    # -- resource operations -------------------------------------------------

    def create_configmap(self, manifest: ConfigMapManifest) -> None:
        with self.lock:
            if manifest.name in self.configmaps:
                raise _Conflict(f'configmaps "{manifest.name}" already exists')
            self.configmaps[manifest.name] = manifest

    def create_job(self, manifest: JobManifest) -> None:
        with self.lock:
            if manifest.name in self.jobs:
                raise _Conflict(f'jobs.batch "{manifest.name}" already exists')
            configmap = self.configmaps.get(manifest.configmap_name)
            if configmap is None:
                raise _BadRequest(
                    f'configMap "{manifest.configmap_name}" not found; create it first'
                )
            result = default_runner(
                manifest,
                configmap,
                self.node,
                modeled_time=self.modeled_time,
                sim_cap_bytes=self.sim_cap_bytes,
            )
            now = self.clock.now()
            delay = self.node.schedule_delay_ms / 1000.0
            if manifest.image not in self.seen_image_tags:
                self.seen_image_tags.add(manifest.image)
                delay += self.node.image_pull_delay_ms / 1000.0
            if (
                self.node.contention_threshold_bytes is not None
                and result.required_memory_bytes is not None
                and result.required_memory_bytes > self.node.contention_threshold_bytes
            ):
                excess_gib = (
                    result.required_memory_bytes - self.node.contention_threshold_bytes
                ) / GIB
                delay += excess_gib * self.node.contention_ms_per_gib / 1000.0

            earliest = now + delay
            uses_gpu = manifest.resource_key == GPU_RESOURCE_KEY
            record = _JobRecord(
                manifest=manifest,
                created_at=now,
                scheduled_at=earliest,
                finished_at=earliest + result.duration_s,
                exit_code=result.exit_code,
                stdout=result.stdout,
                reason=result.reason,
                uses_gpu=uses_gpu,
            )
            if uses_gpu:
                if self.node.gpu_count == 0:
                    # No device will ever free up; the job pends forever.
                    record.scheduled_at = record.finished_at = float("inf")
                else:
                    slot = min(range(self.node.gpu_count), key=lambda i: self.gpu_free_at[i])
                    start = max(earliest, self.gpu_free_at[slot])
                    record.gpu_slot = slot
                    record.prev_slot_free_at = self.gpu_free_at[slot]
                    record.scheduled_at = start
                    record.finished_at = start + result.duration_s
                    self.gpu_free_at[slot] = record.finished_at
            self.jobs[manifest.name] = record
            self.total_jobs_created += 1

    def get_job(self, name: str) -> _JobRecord:
        with self.lock:
            record = self.jobs.get(name)
            if record is None:
                raise _NotFound(f'jobs.batch "{name}" not found')
            return record

    def delete_job(self, name: str) -> None:
        with self.lock:
            record = self.jobs.pop(name, None)
            if record is None:
                raise _NotFound(f'jobs.batch "{name}" not found')
            # A pending GPU job never ran; release its reserved slot when it
            # is still the tail of that slot's reservation chain.
            if (
                record.gpu_slot is not None
                and self.clock.now() < record.scheduled_at
                and self.gpu_free_at[record.gpu_slot] == record.finished_at
                and record.prev_slot_free_at is not None
            ):
                self.gpu_free_at[record.gpu_slot] = record.prev_slot_free_at

    def delete_configmap(self, name: str) -> None:
        with self.lock:
            if self.configmaps.pop(name, None) is None:
                raise _NotFound(f'configmaps "{name}" not found')

    def pods_for_job(self, job_name: str) -> list[dict]:
        with self.lock:
            record = self.jobs.get(job_name)
            if record is None:
                return []
            return [self._pod_document(job_name, record)]

    def pod_log(self, pod_name: str) -> str:
        with self.lock:
            for name, record in self.jobs.items():
                if pod_name == f"{name}-pod":
                    if record.phase(self.clock.now()) is JobPhase.PENDING:
                        return ""
                    return record.stdout
            raise _NotFound(f'pods "{pod_name}" not found')

    # -- documents ------------------------------------------------------------

    def job_document(self, name: str) -> dict:
        record = self.get_job(name)
        now = self.clock.now()
        phase = record.phase(now)
        status: dict = {
            "active": 1 if phase is JobPhase.RUNNING else 0,
            "succeeded": 1 if phase is JobPhase.SUCCEEDED else 0,
            "failed": 1 if phase is JobPhase.FAILED else 0,
        }
        if phase is not JobPhase.PENDING:
            status["startTime"] = _render_time(record.scheduled_at)
        if phase.terminal:
            status["completionTime"] = _render_time(record.finished_at)
            if phase is JobPhase.SUCCEEDED:
                status["conditions"] = [
                    {"type": "Complete", "status": "True", "exitCode": 0}
                ]
            else:
                status["conditions"] = [
                    {
                        "type": "Failed",
                        "status": "True",
                        "reason": record.reason or "Error",
                        "message": f"container exited with code {record.exit_code}",
                        "exitCode": record.exit_code,
                    }
                ]
        else:
            status["conditions"] = []
        return {
            "apiVersion": "batch/v1",
            "kind": "Job",
            "metadata": {"name": name},
            "status": status,
        }

    def _pod_document(self, job_name: str, record: _JobRecord) -> dict:
        phase = record.phase(self.clock.now())
        pod_phase = {
            JobPhase.PENDING: "Pending",
            JobPhase.RUNNING: "Running",
            JobPhase.SUCCEEDED: "Succeeded",
            JobPhase.FAILED: "Failed",
        }[phase]
        return {
            "metadata": {
                "name": f"{job_name}-pod",
                "creationTimestamp": _render_time(record.created_at),
                "labels": {"job-name": job_name},
            },
            "status": {"phase": pod_phase},
        }

    def introspect(self) -> dict:
        with self.lock:
            now = self.clock.now()
            phases = {name: r.phase(now) for name, r in self.jobs.items()}
            running_gpu = sum(
                1
                for name, r in self.jobs.items()
                if r.uses_gpu and phases[name] is JobPhase.RUNNING
            )
            pending = [
                name
                for name, r in sorted(self.jobs.items(), key=lambda kv: kv[1].created_at)
                if phases[name] is JobPhase.PENDING
            ]
            return {
                "jobs": len(self.jobs),
                "configmaps": len(self.configmaps),
                "gpus_in_use": running_gpu,
                "gpu_count": self.node.gpu_count,
                "queue": pending,
                "phases": {name: phase.value for name, phase in phases.items()},
                "total_jobs_created": self.total_jobs_created,
            }


def _render_time(seconds: float) -> str:
    stamp = TIMESTAMP_EPOCH + timedelta(seconds=seconds)
    return stamp.isoformat().replace("+00:00", "Z")


class _HttpError(Exception):
    status = 500


class _BadRequest(_HttpError):
    status = 400


class _NotFound(_HttpError):
    status = 404


class _Conflict(_HttpError):
    status = 409


_JOB_PATH = re.compile(r"^/apis/batch/v1/namespaces/([^/]+)/jobs(?:/([^/]+))?$")
_CONFIGMAP_PATH = re.compile(r"^/api/v1/namespaces/([^/]+)/configmaps(?:/([^/]+))?$")
_PODS_PATH = re.compile(r"^/api/v1/namespaces/([^/]+)/pods$")
_POD_LOG_PATH = re.compile(r"^/api/v1/namespaces/([^/]+)/pods/([^/]+)/log$")


class _Handler(BaseHTTPRequestHandler):
    state: _ClusterState
    namespace: str
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True

    def log_message(self, fmt: str, *args) -> None:  # noqa: A003 - silence http.server
        pass

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_text(self, status: int, text: str) -> None:
        data = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, message: str) -> None:
        self._send_json(status, {"kind": "Status", "status": "Failure", "message": message})

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length)

    def _check_namespace(self, ns: str) -> bool:
        if ns != self.namespace:
            self._error(404, f'namespace "{ns}" not found')
            return False
        return True

    def do_POST(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        try:
            m = _JOB_PATH.match(parsed.path)
            if m and m.group(2) is None:
                if not self._check_namespace(m.group(1)):
                    return
                manifest = parse(self._read_body().decode("utf-8"))
                if not isinstance(manifest, JobManifest):
                    raise _BadRequest("expected a Job manifest")
                self.state.create_job(manifest)
                self._send_json(201, {"kind": "Job", "metadata": {"name": manifest.name}})
                return
            m = _CONFIGMAP_PATH.match(parsed.path)
            if m and m.group(2) is None:
                if not self._check_namespace(m.group(1)):
                    return
                manifest = parse(self._read_body().decode("utf-8"))
                if not isinstance(manifest, ConfigMapManifest):
                    raise _BadRequest("expected a ConfigMap manifest")
                self.state.create_configmap(manifest)
                self._send_json(
                    201, {"kind": "ConfigMap", "metadata": {"name": manifest.name}}
                )
                return
            self._error(404, f"unknown path {parsed.path}")
        except _HttpError as exc:
            self._error(exc.status, str(exc))
        except (ValueError, yaml.YAMLError) as exc:
            self._error(400, f"invalid manifest: {exc}")

    def do_GET(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        try:
            if parsed.path == "/__q8s/introspect":
                self._send_json(200, self.state.introspect())
                return
            m = _JOB_PATH.match(parsed.path)
            if m and m.group(2):
                if not self._check_namespace(m.group(1)):
                    return
                self._send_json(200, self.state.job_document(m.group(2)))
                return
            m = _POD_LOG_PATH.match(parsed.path)
            if m:
                if not self._check_namespace(m.group(1)):
                    return
                self._send_text(200, self.state.pod_log(m.group(2)))
                return
            m = _PODS_PATH.match(parsed.path)
            if m:
                if not self._check_namespace(m.group(1)):
                    return
                query = parse_qs(parsed.query)
                selector = (query.get("labelSelector") or [""])[0]
                sel = re.match(r"^job-name=(.+)$", selector)
                if sel is None:
                    raise _BadRequest(f"unsupported labelSelector {selector!r}")
                items = self.state.pods_for_job(sel.group(1))
                self._send_json(200, {"kind": "PodList", "items": items})
                return
            self._error(404, f"unknown path {parsed.path}")
        except _HttpError as exc:
            self._error(exc.status, str(exc))

    def do_DELETE(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        try:
            m = _JOB_PATH.match(parsed.path)
            if m and m.group(2):
                if not self._check_namespace(m.group(1)):
                    return
                self.state.delete_job(m.group(2))
                self._send_json(200, {"kind": "Status", "status": "Success"})
                return
            m = _CONFIGMAP_PATH.match(parsed.path)
            if m and m.group(2):
                if not self._check_namespace(m.group(1)):
                    return
                self.state.delete_configmap(m.group(2))
                self._send_json(200, {"kind": "Status", "status": "Success"})
                return
            self._error(404, f"unknown path {parsed.path}")
        except _HttpError as exc:
            self._error(exc.status, str(exc))


class FakeCluster:
    """Loopback HTTP server owning one _ClusterState; use as context manager."""

    def __init__(
        self,
        node: NodeSpec,
        *,
        clock: Clock | None = None,
        namespace: str = "default",
        modeled_time: bool | None = None,
        sim_cap_bytes: int = DEFAULT_SIM_CAP_BYTES,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        clock = clock if clock is not None else WallClock()
        if modeled_time is None:
            modeled_time = isinstance(clock, VirtualClock)
        self.clock = clock
        self.state = _ClusterState(
            node, clock, modeled_time=modeled_time, sim_cap_bytes=sim_cap_bytes
        )
        self.namespace = namespace
        handler = type(
            "BoundHandler", (_Handler,), {"state": self.state, "namespace": namespace}
        )
        try:
            self._server = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise RuntimeError(f"cannot bind fake cluster to {host}:{port}: {exc}") from exc
        self._server.daemon_threads = True
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(self.endpoint, Insecure(), namespace=self.namespace)

    def introspect(self) -> dict:
        return self.state.introspect()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "FakeCluster":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def serve(
    node: NodeSpec | str,
    *,
    clock: Clock | None = None,
    namespace: str = "default",
    modeled_time: bool | None = None,
    sim_cap_bytes: int = DEFAULT_SIM_CAP_BYTES,
    host: str = "127.0.0.1",
    port: int = 0,
) -> FakeCluster:
    """Start a fake cluster; `node` may be a NodeSpec or a profile name."""
    if isinstance(node, str):
        try:
            node = PROFILES[node]
        except KeyError:
            raise ValueError(
                f"unknown profile {node!r}; expected one of {sorted(PROFILES)}"
            ) from None
    return FakeCluster(
        node,
        clock=clock,
        namespace=namespace,
        modeled_time=modeled_time,
        sim_cap_bytes=sim_cap_bytes,
        host=host,
        port=port,
    )
