"""Minimal cluster API client: kubeconfig parsing plus Job/ConfigMap/pod-log
operations over the cluster's REST interface.

The client is stateless between calls apart from connection reuse; GET and
DELETE are safe to retry. TLS verification is on by default and disabled
only by an explicit insecure-skip-tls-verify flag in the kubeconfig.
"""

from __future__ import annotations

import atexit
import base64
import binascii
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from urllib.parse import quote, urlparse

import requests
import yaml

from q8s.manifests import (
    ConfigMapManifest,
    JobManifest,
    JobPhase,
    JobStatus,
    serialize,
)

REQUEST_TIMEOUT_S = 30.0


class ConfigError(Exception):
    """Cluster configuration file is missing or inconsistent."""


class AuthError(Exception):
    """The API server rejected our credentials (HTTP 401/403)."""


class NotFoundError(Exception):
    """The named resource does not exist (HTTP 404)."""


class ApiError(Exception):
    """Any other API-level failure; carries the server's message verbatim."""

    def __init__(self, status_code: int, message: str) -> None:
        super().__init__(f"HTTP {status_code}: {message}")
        self.status_code = status_code
        self.api_message = message


class TransportError(Exception):
    """Network-level failure; the request may be retried."""


@dataclass(frozen=True)
class BearerToken:
    token: str


@dataclass(frozen=True)
class ClientCert:
    cert_pem: bytes
    key_pem: bytes


@dataclass(frozen=True)
class Insecure:
    """No credentials; anonymous access."""


AuthMethod = BearerToken | ClientCert | Insecure


@dataclass(frozen=True)
class ClusterConfig:
    server_url: str
    auth: AuthMethod = field(default_factory=Insecure)
    cluster_ca: bytes | None = None
    namespace: str = "default"
    skip_tls_verify: bool = False

    def __post_init__(self) -> None:
        parsed = urlparse(self.server_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigError(f"server url must be absolute http(s): {self.server_url!r}")


def _decode_b64(value: str, what: str) -> bytes:
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ConfigError(f"invalid base64 in {what}: {exc}") from exc


def _load_pem(entry: dict, data_key: str, path_key: str, base_dir: Path | None) -> bytes | None:
    if data_key in entry:
        return _decode_b64(entry[data_key], data_key)
    if path_key in entry:
        path = Path(entry[path_key])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            return path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read {path_key} file {path}: {exc}") from exc
    return None


def load_kubeconfig(source: str | Path | bytes) -> ClusterConfig:
    """Resolve current-context into a ClusterConfig.

    Accepts a file path or raw document bytes. Base64 ``*-data`` fields are
    decoded inline; path-valued certificate fields are read relative to the
    kubeconfig's directory.
    """
    base_dir: Path | None = None
    if isinstance(source, bytes):
        raw = source
    else:
        path = Path(source)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read kubeconfig {path}: {exc}") from exc
        base_dir = path.parent

    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"kubeconfig is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("kubeconfig must be a mapping")

    current = doc.get("current-context")
    if not current:
        raise ConfigError("kubeconfig missing key: current-context")

    def _find(section: str, name: str, inner_key: str) -> dict:
        for entry in doc.get(section) or []:
            if entry.get("name") == name:
                return entry.get(inner_key) or {}
        raise ConfigError(f"{inner_key} not found: {name!r} (referenced by context)")

    context = _find("contexts", current, "context")
    cluster_name = context.get("cluster")
    user_name = context.get("user")
    if not cluster_name or not user_name:
        raise ConfigError(f"context {current!r} must name a cluster and a user")
    cluster = _find("clusters", cluster_name, "cluster")
    user = _find("users", user_name, "user")

    server = cluster.get("server")
    if not server:
        raise ConfigError(f"cluster {cluster_name!r} missing key: server")

    ca = _load_pem(cluster, "certificate-authority-data", "certificate-authority", base_dir)

    auth: AuthMethod
    if user.get("token"):
        auth = BearerToken(user["token"])
    else:
        cert = _load_pem(user, "client-certificate-data", "client-certificate", base_dir)
        key = _load_pem(user, "client-key-data", "client-key", base_dir)
        if cert is not None and key is not None:
            auth = ClientCert(cert, key)
        elif cert is not None or key is not None:
            raise ConfigError(f"user {user_name!r} has a client certificate without a key (or vice versa)")
        else:
            auth = Insecure()

    return ClusterConfig(
        server_url=server.rstrip("/"),
        auth=auth,
        cluster_ca=ca,
        namespace=context.get("namespace") or "default",
        skip_tls_verify=bool(cluster.get("insecure-skip-tls-verify", False)),
    )


def render_kubeconfig(
    server_url: str, namespace: str = "default", token: str | None = None
) -> str:
    """Emit a minimal kubeconfig document pointing at the given server."""
    user: dict = {"token": token} if token else {}
    doc = {
        "apiVersion": "v1",
        "kind": "Config",
        "clusters": [{"name": "q8s", "cluster": {"server": server_url}}],
        "users": [{"name": "q8s-user", "user": user}],
        "contexts": [
            {
                "name": "q8s",
                "context": {"cluster": "q8s", "user": "q8s-user", "namespace": namespace},
            }
        ],
        "current-context": "q8s",
    }
    return yaml.safe_dump(doc, sort_keys=False)


_sessions: dict[ClusterConfig, requests.Session] = {}
_sessions_lock = threading.Lock()
_temp_files: list[str] = []


def _materialize(data: bytes, suffix: str) -> str:
    handle = tempfile.NamedTemporaryFile(suffix=suffix, delete=False)
    handle.write(data)
    handle.close()
    _temp_files.append(handle.name)
    return handle.name


@atexit.register
def _cleanup_temp_files() -> None:
    for name in _temp_files:
        try:
            Path(name).unlink(missing_ok=True)
        except OSError:
            pass


def _session(cfg: ClusterConfig) -> requests.Session:
    with _sessions_lock:
        sess = _sessions.get(cfg)
        if sess is not None:
            return sess
        sess = requests.Session()
        if isinstance(cfg.auth, BearerToken):
            sess.headers["Authorization"] = f"Bearer {cfg.auth.token}"
        elif isinstance(cfg.auth, ClientCert):
            sess.cert = (
                _materialize(cfg.auth.cert_pem, ".crt"),
                _materialize(cfg.auth.key_pem, ".key"),
            )
        if cfg.skip_tls_verify:
            sess.verify = False
        elif cfg.cluster_ca is not None:
            sess.verify = _materialize(cfg.cluster_ca, ".ca.crt")
        _sessions[cfg] = sess
        return sess


def _request(cfg: ClusterConfig, method: str, path: str, **kwargs) -> requests.Response:
    url = cfg.server_url + path
    try:
        resp = _session(cfg).request(method, url, timeout=REQUEST_TIMEOUT_S, **kwargs)
    except requests.RequestException as exc:
        raise TransportError(
            f"{method} {url} failed: {exc}; the request may be retried"
        ) from exc
    if resp.status_code in (401, 403):
        raise AuthError(_api_message(resp))
    if resp.status_code == 404:
        raise NotFoundError(_api_message(resp))
    if resp.status_code >= 400:
        raise ApiError(resp.status_code, _api_message(resp))
    return resp


def _api_message(resp: requests.Response) -> str:
    try:
        body = resp.json()
        if isinstance(body, dict) and body.get("message"):
            return str(body["message"])
    except ValueError:
        pass
    return resp.text or resp.reason or f"HTTP {resp.status_code}"


def _collection_path(cfg: ClusterConfig, kind: str) -> str:
    if kind == "Job":
        return f"/apis/batch/v1/namespaces/{cfg.namespace}/jobs"
    if kind == "ConfigMap":
        return f"/api/v1/namespaces/{cfg.namespace}/configmaps"
    raise ValueError(f"unsupported kind {kind!r}")


def create_resource(cfg: ClusterConfig, manifest: JobManifest | ConfigMapManifest) -> str:
    """POST the serialized manifest to its collection; returns the name."""
    kind = "Job" if isinstance(manifest, JobManifest) else "ConfigMap"
    resp = _request(
        cfg,
        "POST",
        _collection_path(cfg, kind),
        data=serialize(manifest).encode("utf-8"),
        headers={"Content-Type": "application/yaml"},
    )
    try:
        return str(resp.json()["metadata"]["name"])
    except (ValueError, KeyError):
        return manifest.name


def _parse_time(value: str | None) -> datetime | None:
    if not value:
        return None
    try:
        return datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        return None


def get_job_status(cfg: ClusterConfig, name: str) -> JobStatus:
    """Map the job's API conditions onto a JobStatus."""
    resp = _request(cfg, "GET", _collection_path(cfg, "Job") + f"/{name}")
    doc = resp.json()
    status = doc.get("status") or {}
    started = _parse_time(status.get("startTime"))
    finished = _parse_time(status.get("completionTime"))
    for cond in status.get("conditions") or []:
        if cond.get("status") != "True":
            continue
        if cond.get("type") == "Complete":
            return JobStatus(
                JobPhase.SUCCEEDED, exit_code=0, started_at=started, finished_at=finished
            )
        if cond.get("type") == "Failed":
            exit_code = cond.get("exitCode")
            return JobStatus(
                JobPhase.FAILED,
                exit_code=int(exit_code) if exit_code is not None else -1,
                reason=cond.get("reason"),
                started_at=started,
                finished_at=finished,
            )
    if int(status.get("active") or 0) > 0:
        return JobStatus(JobPhase.RUNNING, started_at=started)
    return JobStatus(JobPhase.PENDING)


def get_pod_logs(cfg: ClusterConfig, job_name: str) -> tuple[str, bool]:
    """Full container output of the job's pod.

    Returns (text, stderr_available); the log stream merges stdout and
    stderr, so stderr is never separately available here.
    """
    selector = quote(f"job-name={job_name}", safe="")
    resp = _request(
        cfg, "GET", f"/api/v1/namespaces/{cfg.namespace}/pods?labelSelector={selector}"
    )
    items = resp.json().get("items") or []
    if not items:
        raise NotFoundError(f"no pods found for job {job_name!r}")
    items.sort(key=lambda p: p.get("metadata", {}).get("creationTimestamp") or "")
    pod_name = items[-1]["metadata"]["name"]
    log_resp = _request(cfg, "GET", f"/api/v1/namespaces/{cfg.namespace}/pods/{pod_name}/log")
    return log_resp.text, False


def delete_resource(cfg: ClusterConfig, kind: str, name: str) -> None:
    """Delete with foreground propagation; absent resources count as success."""
    try:
        _request(
            cfg,
            "DELETE",
            _collection_path(cfg, kind) + f"/{name}?propagationPolicy=Foreground",
        )
    except NotFoundError:
        return
