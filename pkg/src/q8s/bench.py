"""Benchmark harness: sweep qubit counts, repeat, average, split timing.

For every scenario x qubit count the harness executes the routine payload
``iterations`` times, averages the wall/simulator/overhead split, and
records the builder's exact gate count next to the coarse scaling value.
Rows where the device cannot hold the statevector are recorded with their
failure reason instead of aborting the sweep; infrastructure errors mark
the scenario as failed and the sweep moves on to the next scenario.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import statistics
import sys
from dataclasses import asdict, dataclass, field
from typing import Iterator, Protocol

from q8s.celldeps import CellTask
from q8s.clock import Clock, VirtualClock
from q8s.clusterapi import ClusterConfig
from q8s.dispatch import (
    DependencyConfig,
    ExecutionResult,
    Failure,
    ImageConfig,
    execute,
    execute_local,
)
from q8s.fakecluster import NodeSpec, serve
from q8s.simkit import Precision, build_routine, memory_estimate, scaling_formula

CSV_HEADER = (
    "scenario,routine,n,mean_simulator_s,mean_overhead_s,mean_wall_s,"
    "stddev_wall_s,gate_count,paper_scaling_value"
)

# Desk-scale default: local sweeps stop at 16 qubits (a 1 MiB state) so a
# full default sweep finishes in minutes; larger n is an explicit opt-in.
DESK_SCALE_LOCAL_LIMIT_BYTES = memory_estimate(16, Precision.DOUBLE).bytes


class PayloadExecutor(Protocol):
    def execute_payload(self, source: str) -> ExecutionResult: ...


@dataclass
class LocalExecutor:
    """In-process baseline executor."""

    memory_limit_bytes: int = DESK_SCALE_LOCAL_LIMIT_BYTES
    clock: Clock | None = None
    modeled_time: bool = False

    def execute_payload(self, source: str) -> ExecutionResult:
        return execute_local(
            CellTask(source, "cpu", "bench"),
            memory_limit_bytes=self.memory_limit_bytes,
            clock=self.clock,
            modeled_time=self.modeled_time,
        )


@dataclass
class ClusterExecutor:
    """Executor that dispatches payloads to a cluster endpoint."""

    cfg: ClusterConfig
    target: str = "gpu"
    deps_cfg: DependencyConfig | None = None
    image_cfg: ImageConfig | None = None
    poll_interval_s: float = 0.5
    timeout_s: float = 1800.0
    clock: Clock | None = None

    def __post_init__(self) -> None:
        if self.image_cfg is None:
            self.image_cfg = ImageConfig()

    def execute_payload(self, source: str) -> ExecutionResult:
        return execute(
            CellTask(source, self.target, "bench"),
            self.cfg,
            self.deps_cfg,
            self.image_cfg,
            poll_interval_s=self.poll_interval_s,
            timeout_s=self.timeout_s,
            clock=self.clock,
        )


@dataclass(frozen=True)
class Scenario:
    label: str
    executor: PayloadExecutor


@dataclass(frozen=True)
class BenchPlan:
    routine: str
    scenarios: tuple[Scenario, ...]
    qubit_start: int = 3
    qubit_end: int = 29
    iterations: int = 10
    d: int = 20
    p: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.routine not in ("qft", "qv", "qaoa"):
            raise ValueError(f"unknown routine {self.routine!r}")
        if self.qubit_start > self.qubit_end:
            raise ValueError(
                f"qubit range is empty: {self.qubit_start}..{self.qubit_end}"
            )
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.scenarios:
            raise ValueError("plan needs at least one scenario")

    def payload(self, n: int) -> str:
        return (
            f"#q8s: routine={self.routine} n={n} d={self.d} p={self.p} "
            f"seed={self.seed}\n"
        )


@dataclass
class BenchRow:
    scenario: str
    routine: str
    n: int
    mean_simulator_s: float = 0.0
    mean_overhead_s: float = 0.0
    mean_wall_s: float = 0.0
    stddev_wall_s: float = 0.0
    gate_count: int = 0
    paper_scaling_value: float = 0.0
    status: str = "ok"  # ok | failed | skipped | error
    reason: str | None = None
    iterations: int = 0
    raw_wall_s: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class SpeedupRow:
    routine: str
    n: int
    wall_speedup: float
    simulator_speedup: float


def _reference_counts(plan: BenchPlan, n: int) -> tuple[int, float]:
    circuit = build_routine(plan.routine, n, d=plan.d, p=plan.p, seed=plan.seed)
    return circuit.gate_count, scaling_formula(plan.routine, n, d=plan.d, p=plan.p)


def run_bench(plan: BenchPlan) -> list[BenchRow]:
    rows: list[BenchRow] = []
    for scenario in plan.scenarios:
        scenario_broken: str | None = None
        for n in range(plan.qubit_start, plan.qubit_end + 1):
            row = BenchRow(scenario=scenario.label, routine=plan.routine, n=n)
            rows.append(row)
            if scenario_broken is not None:
                row.status, row.reason = "skipped", scenario_broken
                continue
            try:
                row.gate_count, row.paper_scaling_value = _reference_counts(plan, n)
            except ValueError as exc:
                row.status, row.reason = "skipped", str(exc)
                continue

            walls: list[float] = []
            sims: list[float] = []
            overheads: list[float] = []
            for _ in range(plan.iterations):
                result = scenario.executor.execute_payload(plan.payload(n))
                if isinstance(result.outcome, Failure):
                    failure = result.outcome
                    if failure.stage is not None:
                        row.status, row.reason = "error", f"{failure.stage}: {failure.reason}"
                        scenario_broken = f"scenario failed at n={n}: {failure.reason}"
                    else:
                        row.status = "failed"
                        row.reason = failure.reason or f"exit_code={failure.exit_code}"
                    break
                walls.append(result.timing.wall_seconds)
                sims.append(result.timing.simulator_seconds)
                overheads.append(result.timing.overhead_seconds)
            if row.status != "ok":
                continue
            row.iterations = len(walls)
            row.mean_wall_s = statistics.fmean(walls)
            row.mean_simulator_s = statistics.fmean(sims)
            row.mean_overhead_s = statistics.fmean(overheads)
            row.stddev_wall_s = statistics.pstdev(walls) if len(walls) > 1 else 0.0
            row.raw_wall_s = tuple(walls)
    return rows


def speedup(baseline_rows: list[BenchRow], scenario_rows: list[BenchRow]) -> list[SpeedupRow]:
    """Per-n wall and simulator speedups of a scenario over the baseline."""
    baseline = {
        (r.routine, r.n): r
        for r in baseline_rows
        if r.status == "ok" and r.mean_wall_s > 0 and r.mean_simulator_s > 0
    }
    table: list[SpeedupRow] = []
    for row in scenario_rows:
        base = baseline.get((row.routine, row.n))
        if base is None or row.status != "ok":
            continue
        if row.mean_wall_s <= 0 or row.mean_simulator_s <= 0:
            continue
        table.append(
            SpeedupRow(
                routine=row.routine,
                n=row.n,
                wall_speedup=base.mean_wall_s / row.mean_wall_s,
                simulator_speedup=base.mean_simulator_s / row.mean_simulator_s,
            )
        )
    table.sort(key=lambda r: (r.routine, r.n))
    return table


def _sorted_rows(rows: list[BenchRow]) -> list[BenchRow]:
    return sorted(rows, key=lambda r: (r.scenario, r.routine, r.n))


def render_csv(rows: list[BenchRow]) -> str:
    """CSV text of successful rows; fixed header, floats with 6 decimals."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for row in _sorted_rows(rows):
        if row.status != "ok":
            continue
        writer.writerow(
            [
                row.scenario,
                row.routine,
                row.n,
                f"{row.mean_simulator_s:.6f}",
                f"{row.mean_overhead_s:.6f}",
                f"{row.mean_wall_s:.6f}",
                f"{row.stddev_wall_s:.6f}",
                row.gate_count,
                f"{row.paper_scaling_value:.6f}",
            ]
        )
    return out.getvalue()


def emit_csv(rows: list[BenchRow], path: str) -> None:
    """Write the CSV table; path '-' streams to stdout."""
    text = render_csv(rows)
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def emit_json(rows: list[BenchRow], path: str) -> None:
    """Write every row (including failures and raw walls) as JSON."""
    payload = [asdict(row) for row in _sorted_rows(rows)]
    text = json.dumps(payload, indent=2) + "\n"
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise OSError(f"cannot write JSON to {path}: {exc}") from exc


def any_scenario_failed(rows: list[BenchRow]) -> bool:
    return any(row.status == "error" for row in rows)


@contextlib.contextmanager
def fake_cluster_scenario(
    label: str,
    node: NodeSpec | str,
    *,
    clock: Clock | None = None,
    poll_interval_s: float = 0.1,
    timeout_s: float = 600.0,
    target: str = "gpu",
) -> Iterator[Scenario]:
    """Scenario backed by an in-process fake cluster (virtual clock default)."""
    clock = clock if clock is not None else VirtualClock()
    with serve(node, clock=clock) as cluster:
        executor = ClusterExecutor(
            cfg=cluster.cluster_config(),
            target=target,
            poll_interval_s=poll_interval_s,
            timeout_s=timeout_s,
            clock=clock,
        )
        yield Scenario(label=label, executor=executor)
