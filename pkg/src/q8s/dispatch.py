"""Orchestration of one payload execution against a cluster (or locally).

The cluster path performs, in order: dependency detection, image spec
rendering, image ensure (build only on cache miss), manifest creation,
ConfigMap create, Job create, status polling until terminal or timeout,
log collection, and unconditional cleanup of both resources. Wall time is
measured from entry to return; the payload's reported simulator seconds
are parsed from its stdout, and overhead is wall minus simulator by
construction.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

from q8s import celldeps, clusterapi
from q8s.celldeps import CellTask, ImageBuilder, ImageCache, NullBuilder
from q8s.clock import Clock, WallClock
from q8s.clusterapi import ClusterConfig, ConfigError
from q8s.manifests import JobPhase, make_manifests, new_job_name
from q8s.payload import parse_sim_seconds, run_payload
from q8s.simkit import DEFAULT_MEMORY_LIMIT_BYTES

logger = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL_S = 0.5
DEFAULT_TIMEOUT_S = 1800.0

StageObserver = Callable[[str], None]


@dataclass(frozen=True)
class TimingRecord:
    """Wall, simulator, and overhead seconds for one execution."""

    wall_seconds: float
    simulator_seconds: float
    overhead_seconds: float

    def __post_init__(self) -> None:
        if self.wall_seconds < 0 or self.simulator_seconds < 0 or self.overhead_seconds < 0:
            raise ValueError(f"timing fields must be non-negative: {self}")

    @classmethod
    def from_wall_and_sim(cls, wall_seconds: float, simulator_seconds: float) -> "TimingRecord":
        # Clock subtraction can land one ulp below the simulator time when
        # the two are equal by construction; snap that rounding dust away.
        if simulator_seconds > wall_seconds >= simulator_seconds - 1e-9:
            wall_seconds = simulator_seconds
        return cls(wall_seconds, simulator_seconds, wall_seconds - simulator_seconds)


@dataclass(frozen=True)
class Success:
    stdout: str


@dataclass(frozen=True)
class Failure:
    stderr_text: str
    exit_code: int | None
    reason: str | None
    stage: str | None = None


@dataclass(frozen=True)
class ExecutionResult:
    outcome: Success | Failure
    timing: TimingRecord
    job_name: str

    @property
    def ok(self) -> bool:
        return isinstance(self.outcome, Success)


@dataclass(frozen=True)
class DependencyConfig:
    mapping: dict[str, str] = field(
        default_factory=lambda: dict(celldeps.DEFAULT_MODULE_REQUIREMENTS)
    )
    builtin_modules: frozenset[str] = celldeps.DEFAULT_BUILTIN_MODULES


@dataclass
class ImageConfig:
    base_image: str = field(
        default_factory=lambda: os.environ.get(
            "Q8S_BASE_IMAGE", "registry.example.com/q8s/base:cuda12"
        )
    )
    registry_prefix: str = field(
        default_factory=lambda: os.environ.get("Q8S_REGISTRY_PREFIX", "registry.example.com/q8s")
    )
    cache: ImageCache = field(default_factory=ImageCache)
    builder: ImageBuilder = field(default_factory=NullBuilder)


def resolve_cluster_config(kubeconfig_path: str | None = None) -> ClusterConfig:
    """Load the cluster config from an explicit path or $KUBECONFIG."""
    path = kubeconfig_path or os.environ.get("KUBECONFIG")
    if not path:
        raise ConfigError(
            "KUBECONFIG not set: export KUBECONFIG=/path/to/kubeconfig "
            "(or pass an explicit kubeconfig path) to reach a cluster target"
        )
    return clusterapi.load_kubeconfig(path)


def format_failure(failure: Failure, job_name: str) -> str:
    """One-line diagnostic suitable for stderr, always naming the reason."""
    parts = [f"job {job_name} failed"]
    if failure.stage:
        parts.append(f"stage={failure.stage}")
    if failure.reason:
        parts.append(f"reason={failure.reason}")
    if failure.exit_code is not None:
        parts.append(f"exit_code={failure.exit_code}")
    return "q8s: " + " ".join(parts)


class _StageFailed(Exception):
    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def execute(
    task: CellTask,
    cfg: ClusterConfig,
    deps_cfg: DependencyConfig | None = None,
    image_cfg: ImageConfig | None = None,
    *,
    poll_interval_s: float = DEFAULT_POLL_INTERVAL_S,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    clock: Clock | None = None,
    observer: StageObserver | None = None,
) -> ExecutionResult:
    """Run one payload on the cluster and return its result and timing.

    Cleanup of the Job and ConfigMap is unconditional, including on
    failure and timeout; cleanup errors are logged but never mask the
    primary outcome.
    """
    deps_cfg = deps_cfg or DependencyConfig()
    image_cfg = image_cfg or ImageConfig()
    clock = clock or WallClock()
    notify = observer or (lambda stage: None)

    started = clock.now()
    job_name = new_job_name(task.name_hint)
    created_job = created_configmap = None
    sim_seconds = 0.0
    outcome: Success | Failure

    def finish() -> ExecutionResult:
        wall = clock.now() - started
        timing = TimingRecord.from_wall_and_sim(wall, sim_seconds)
        return ExecutionResult(outcome=outcome, timing=timing, job_name=job_name)

    def cleanup() -> None:
        for kind, name in (("Job", created_job), ("ConfigMap", created_configmap)):
            if name is None:
                continue
            notify(f"delete_{kind.lower()}")
            try:
                clusterapi.delete_resource(cfg, kind, name)
            except Exception as exc:  # cleanup must never mask the outcome
                logger.warning("cleanup of %s %s failed: %s", kind, name, exc)

    try:
        notify("detect_dependencies")
        deps = _stage(
            "detect_dependencies",
            lambda: celldeps.detect_dependencies(
                task.source, deps_cfg.mapping, deps_cfg.builtin_modules
            ),
        )
        notify("render_image_spec")
        spec = _stage(
            "render_image_spec",
            lambda: celldeps.render_image_spec(deps, image_cfg.base_image),
        )
        notify("ensure_image")
        image_tag = _stage(
            "ensure_image",
            lambda: celldeps.ensure_image(
                spec, image_cfg.cache, image_cfg.builder, image_cfg.registry_prefix
            ),
        )
        notify("make_manifests")
        job, configmap = _stage(
            "make_manifests", lambda: make_manifests(task, image_tag, job_name)
        )

        notify("create_configmap")
        created_configmap = _stage(
            "create_configmap", lambda: clusterapi.create_resource(cfg, configmap)
        )
        notify("create_job")
        created_job = _stage("create_job", lambda: clusterapi.create_resource(cfg, job))

        notify("poll")
        deadline = started + timeout_s
        while True:
            status = _stage("poll", lambda: clusterapi.get_job_status(cfg, job_name))
            if status.phase.terminal:
                break
            if clock.now() >= deadline:
                outcome = Failure(
                    stderr_text=(
                        f"q8s: job {job_name} did not finish within {timeout_s:.1f}s"
                    ),
                    exit_code=None,
                    reason="DeadlineExceeded",
                )
                cleanup()
                return finish()
            clock.sleep(min(poll_interval_s, max(deadline - clock.now(), 0.0)))

        notify("fetch_logs")
        logs, _ = _stage("fetch_logs", lambda: clusterapi.get_pod_logs(cfg, job_name))
        sim_seconds = parse_sim_seconds(logs) or 0.0

        if status.phase is JobPhase.SUCCEEDED:
            outcome = Success(stdout=logs)
        else:
            stderr_text = logs if logs.strip() else (
                f"q8s: container failed with reason={status.reason or 'Error'} "
                f"exit_code={status.exit_code}"
            )
            outcome = Failure(
                stderr_text=stderr_text,
                exit_code=status.exit_code,
                reason=status.reason,
            )
        cleanup()
        return finish()
    except _StageFailed as exc:
        outcome = Failure(
            stderr_text=f"q8s: stage {exc.stage} failed: {exc.cause}",
            exit_code=None,
            reason=type(exc.cause).__name__,
            stage=exc.stage,
        )
        cleanup()
        return finish()


def _stage(name: str, action: Callable):
    try:
        return action()
    except Exception as exc:
        raise _StageFailed(name, exc) from exc


def execute_local(
    task: CellTask,
    *,
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES,
    clock: Clock | None = None,
    modeled_time: bool = False,
) -> ExecutionResult:
    """Run the payload in-process with the same runner logic and timing split."""
    if task.target != "cpu":
        raise ValueError(f"local execution supports only the cpu target, got {task.target}")
    clock = clock or WallClock()
    started = clock.now()
    result = run_payload(
        task.source,
        memory_limit_bytes=memory_limit_bytes,
        modeled_time=modeled_time,
        advance_clock=clock if modeled_time else None,
    )
    wall = clock.now() - started
    sim = parse_sim_seconds(result.stdout) or 0.0
    timing = TimingRecord.from_wall_and_sim(wall, sim)
    outcome: Success | Failure
    if result.exit_code == 0:
        outcome = Success(stdout=result.stdout)
    else:
        outcome = Failure(
            stderr_text=result.stdout, exit_code=result.exit_code, reason=result.reason
        )
    return ExecutionResult(outcome=outcome, timing=timing, job_name="local")
