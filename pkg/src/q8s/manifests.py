"""Job and ConfigMap resource generation and YAML serialization.

The Job document shape is fixed: batch/v1 Job with a single container that
runs ``python /app/main.py`` against a source-code ConfigMap volume mounted
at /app, restartPolicy Never, and at most one resources.limits entry that
selects the device class (nvidia.com/gpu for GPU, vendor.example.com/qpu
for QPU, absent for CPU). Switching GPU to QPU changes exactly one line.
"""

from __future__ import annotations

import enum
import re
import secrets
from dataclasses import dataclass
from datetime import datetime

import yaml

from q8s.celldeps import CellTask

RESOURCE_NAME_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?$")

GPU_RESOURCE_KEY = "nvidia.com/gpu"
QPU_RESOURCE_KEY = "vendor.example.com/qpu"
MOUNT_PATH = "/app"
CONTAINER_COMMAND = ("python", "/app/main.py")

_TARGET_RESOURCE_KEYS = {"cpu": None, "gpu": GPU_RESOURCE_KEY, "qpu": QPU_RESOURCE_KEY}


class NamingError(Exception):
    """Resource name fails the cluster's naming rules."""


class JobPhase(enum.Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (JobPhase.SUCCEEDED, JobPhase.FAILED)


@dataclass(frozen=True)
class JobStatus:
    phase: JobPhase
    exit_code: int | None = None
    reason: str | None = None
    started_at: datetime | None = None
    finished_at: datetime | None = None

    def __post_init__(self) -> None:
        if self.phase.terminal != (self.exit_code is not None):
            raise ValueError("exit_code must be present exactly when the phase is terminal")
        if self.phase is JobPhase.SUCCEEDED and self.exit_code != 0:
            raise ValueError(f"Succeeded jobs must have exit code 0, got {self.exit_code}")


@dataclass(frozen=True)
class ConfigMapManifest:
    name: str
    data: dict[str, str]

    def __post_init__(self) -> None:
        _check_name(self.name)
        if "main.py" not in self.data:
            raise ValueError("ConfigMap data must contain main.py")


@dataclass(frozen=True)
class JobManifest:
    name: str
    image: str
    configmap_name: str
    command: tuple[str, ...] = CONTAINER_COMMAND
    resource_key: str | None = None
    resource_qty: str = "1"
    mount_path: str = MOUNT_PATH
    restart_policy: str = "Never"

    def __post_init__(self) -> None:
        _check_name(self.name)
        _check_name(self.configmap_name)
        if self.restart_policy != "Never":
            raise ValueError("restart_policy must be Never")
        if self.resource_key not in (None, GPU_RESOURCE_KEY, QPU_RESOURCE_KEY):
            raise ValueError(f"unsupported resource key {self.resource_key!r}")
        if self.resource_key is not None and self.resource_qty != "1":
            raise ValueError("resource quantity must be '1'")
        if self.mount_path != MOUNT_PATH:
            raise ValueError(f"mount path must be {MOUNT_PATH}")
        if tuple(self.command) != CONTAINER_COMMAND:
            raise ValueError(f"command must be {list(CONTAINER_COMMAND)}")


def _check_name(name: str) -> None:
    if not RESOURCE_NAME_RE.match(name) or len(name) > 63:
        raise NamingError(
            f"invalid resource name {name!r}: lowercase alphanumerics and '-' only"
        )


def new_job_name(name_hint: str) -> str:
    """Unique per-execution name so concurrent cells cannot collide."""
    return f"q8s-{name_hint}-{secrets.token_hex(4)}"


def make_manifests(
    task: CellTask, image_tag: str, job_name: str
) -> tuple[JobManifest, ConfigMapManifest]:
    """Build the Job and its source-code ConfigMap for one execution."""
    configmap = ConfigMapManifest(name=f"{job_name}-files", data={"main.py": task.source})
    job = JobManifest(
        name=job_name,
        image=image_tag,
        configmap_name=configmap.name,
        resource_key=_TARGET_RESOURCE_KEYS[task.target],
    )
    return job, configmap


class _LiteralDumper(yaml.SafeDumper):
    pass


def _str_representer(dumper: yaml.SafeDumper, data: str):
    if "\n" in data:
        return dumper.represent_scalar("tag:yaml.org,2002:str", data, style="|")
    return dumper.represent_scalar("tag:yaml.org,2002:str", data)


_LiteralDumper.add_representer(str, _str_representer)


def _dump(document: dict) -> str:
    return yaml.dump(document, Dumper=_LiteralDumper, sort_keys=False, default_flow_style=False)


def job_document(job: JobManifest) -> dict:
    container: dict = {
        "name": "quantum-task",
        "image": job.image,
        "command": list(job.command),
    }
    if job.resource_key is not None:
        container["resources"] = {"limits": {job.resource_key: job.resource_qty}}
    container["volumeMounts"] = [
        {"name": "source-code-volume", "mountPath": job.mount_path}
    ]
    return {
        "apiVersion": "batch/v1",
        "kind": "Job",
        "metadata": {"name": job.name},
        "spec": {
            "template": {
                "metadata": {"name": f"{job.name}-pod"},
                "spec": {
                    "containers": [container],
                    "volumes": [
                        {
                            "name": "source-code-volume",
                            "configMap": {"name": job.configmap_name},
                        }
                    ],
                    "restartPolicy": job.restart_policy,
                },
            }
        },
    }


def configmap_document(configmap: ConfigMapManifest) -> dict:
    return {
        "apiVersion": "v1",
        "kind": "ConfigMap",
        "metadata": {"name": configmap.name},
        "data": dict(configmap.data),
    }


def serialize(manifest: JobManifest | ConfigMapManifest) -> str:
    if isinstance(manifest, JobManifest):
        return _dump(job_document(manifest))
    return _dump(configmap_document(manifest))


def parse(text: str) -> JobManifest | ConfigMapManifest:
    """Inverse of serialize: parse(serialize(m)) == m."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("not a resource document")
    if doc["kind"] == "ConfigMap":
        return ConfigMapManifest(
            name=doc["metadata"]["name"],
            data={k: str(v) for k, v in (doc.get("data") or {}).items()},
        )
    if doc["kind"] == "Job":
        pod = doc["spec"]["template"]["spec"]
        container = pod["containers"][0]
        limits = (container.get("resources") or {}).get("limits") or {}
        resource_key, resource_qty = None, "1"
        if limits:
            (resource_key, resource_qty), = limits.items()
        return JobManifest(
            name=doc["metadata"]["name"],
            image=container["image"],
            configmap_name=pod["volumes"][0]["configMap"]["name"],
            command=tuple(container["command"]),
            resource_key=resource_key,
            resource_qty=str(resource_qty),
            mount_path=container["volumeMounts"][0]["mountPath"],
            restart_policy=pod["restartPolicy"],
        )
    raise ValueError(f"unsupported kind {doc['kind']!r}")
