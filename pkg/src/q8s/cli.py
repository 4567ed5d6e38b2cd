"""Operator CLI: run payloads, sweep benchmarks, serve the kernel and the
fake cluster.

Exit codes: 0 success, 1 job/scenario failure, 2 usage/config/transport
errors. Machine-readable output (Q8S_TIMING, CSV, ready lines) goes to
stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
import tempfile
import threading
from pathlib import Path

from q8s import KERNEL_PROTOCOL_VERSION, __version__, bench, dispatch
from q8s.celldeps import CellTask
from q8s.clock import VirtualClock
from q8s.clusterapi import AuthError, ConfigError, TransportError, render_kubeconfig
from q8s.dispatch import Failure, execute, execute_local, resolve_cluster_config
from q8s.fakecluster import PROFILES, serve
from q8s.simkit import DEFAULT_MEMORY_LIMIT_BYTES
from q8s.wirekernel import (
    KernelSettings,
    default_kernelspec_dir,
    install_kernelspec,
    serve_kernel,
)

EXIT_OK = 0
EXIT_JOB_FAILED = 1
EXIT_USAGE = 2

_INFRA_REASONS = {"TransportError", "ConfigError", "AuthError"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="q8s",
        description="Execute code-cell payloads on a (possibly fake) GPU cluster.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"q8s {__version__} (kernel protocol {KERNEL_PROTOCOL_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one payload file")
    run.add_argument("payload", help="path to the payload file")
    run.add_argument("--target", choices=("cpu", "gpu", "qpu"), default="cpu")
    run.add_argument("--kubeconfig", help="cluster config path (default: $KUBECONFIG)")
    run.add_argument("--poll-interval", type=float, default=0.5, metavar="SECONDS")
    run.add_argument("--timeout", type=float, default=1800.0, metavar="SECONDS")
    run.add_argument(
        "--memory-limit-gib",
        type=float,
        default=DEFAULT_MEMORY_LIMIT_BYTES / 1024**3,
        help="local simulation memory cap (cpu target)",
    )

    bench_p = sub.add_parser("bench", help="sweep qubit counts and emit timing rows")
    bench_p.add_argument("--routine", choices=("qft", "qv", "qaoa"), required=True)
    bench_p.add_argument("--qubits", default="3..29", metavar="A..B")
    bench_p.add_argument("--iterations", type=int, default=10)
    bench_p.add_argument("--layers-d", type=int, default=20, help="qv layer count")
    bench_p.add_argument("--layers-p", type=int, default=5, help="qaoa layer count")
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument(
        "--scenario",
        action="append",
        metavar="local|fake:PROFILE|cluster:KUBECONFIG",
        help="repeatable; default: local",
    )
    bench_p.add_argument("--out", default="-", help="CSV output path, '-' for stdout")
    bench_p.add_argument("--json-out", help="optional JSON output with raw rows")

    kernel = sub.add_parser("kernel", help="serve the notebook kernel")
    kernel.add_argument("--connection-file", required=True)
    kernel.add_argument("--target", choices=("cpu", "gpu", "qpu"), default="cpu")
    kernel.add_argument("--kubeconfig")
    kernel.add_argument("--poll-interval", type=float, default=0.5)
    kernel.add_argument("--timeout", type=float, default=1800.0)

    spec = sub.add_parser("install-kernelspec", help="install the kernelspec")
    spec.add_argument("--user-dir", default=str(default_kernelspec_dir()))

    fake = sub.add_parser("fake-cluster", help="serve the in-process fake cluster")
    fake.add_argument("--profile", default="workstation", metavar="|".join(PROFILES))
    fake.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    fake.add_argument("--kubeconfig-out", help="where to write the generated kubeconfig")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.payload)
    try:
        source = path.read_text()
    except OSError as exc:
        print(f"q8s: cannot read payload {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not source:
        print(f"q8s: payload {path} is empty", file=sys.stderr)
        return EXIT_USAGE

    task = CellTask(source, args.target, "cli")
    try:
        if args.target == "cpu":
            result = execute_local(
                task, memory_limit_bytes=int(args.memory_limit_gib * 1024**3)
            )
        else:
            cfg = resolve_cluster_config(args.kubeconfig)
            result = execute(
                task,
                cfg,
                poll_interval_s=args.poll_interval,
                timeout_s=args.timeout,
            )
    except (ConfigError, TransportError, AuthError) as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_USAGE

    timing = result.timing
    if isinstance(result.outcome, Failure):
        failure = result.outcome
        if failure.stderr_text:
            sys.stderr.write(failure.stderr_text)
            if not failure.stderr_text.endswith("\n"):
                sys.stderr.write("\n")
        print(dispatch.format_failure(failure, result.job_name), file=sys.stderr)
        _print_timing(timing)
        if failure.stage is not None and failure.reason in _INFRA_REASONS:
            return EXIT_USAGE
        return EXIT_JOB_FAILED
    sys.stdout.write(result.outcome.stdout)
    _print_timing(timing)
    return EXIT_OK


def _print_timing(timing: dispatch.TimingRecord) -> None:
    print(
        f"Q8S_TIMING wall={timing.wall_seconds:.6f} "
        f"sim={timing.simulator_seconds:.6f} overhead={timing.overhead_seconds:.6f}"
    )


def _parse_qubit_range(text: str, parser_error) -> tuple[int, int]:
    parts = text.split("..")
    try:
        if len(parts) != 2:
            raise ValueError
        start, end = int(parts[0]), int(parts[1])
    except ValueError:
        parser_error(f"--qubits expects A..B, got {text!r}")
    if start > end:
        parser_error(f"--qubits range is empty: {text}")
    return start, end


def _cmd_bench(args: argparse.Namespace, parser_error) -> int:
    start, end = _parse_qubit_range(args.qubits, parser_error)
    labels = args.scenario or ["local"]
    with contextlib.ExitStack() as stack:
        scenarios = []
        for label in labels:
            if label == "local":
                scenarios.append(bench.Scenario("local", bench.LocalExecutor()))
            elif label.startswith("fake:"):
                profile = label.split(":", 1)[1]
                if profile not in PROFILES:
                    parser_error(f"unknown fake profile {profile!r}; choose from {sorted(PROFILES)}")
                scenarios.append(
                    stack.enter_context(
                        bench.fake_cluster_scenario(label, profile, clock=VirtualClock())
                    )
                )
            elif label.startswith("cluster:"):
                kubeconfig = label.split(":", 1)[1]
                try:
                    cfg = resolve_cluster_config(kubeconfig)
                except ConfigError as exc:
                    print(f"{exc}", file=sys.stderr)
                    return EXIT_USAGE
                scenarios.append(
                    bench.Scenario(label, bench.ClusterExecutor(cfg=cfg))
                )
            else:
                parser_error(f"unknown scenario {label!r}")

        plan = bench.BenchPlan(
            routine=args.routine,
            scenarios=tuple(scenarios),
            qubit_start=start,
            qubit_end=end,
            iterations=args.iterations,
            d=args.layers_d,
            p=args.layers_p,
            seed=args.seed,
        )
        print(
            f"q8s bench: routine={plan.routine} qubits {start}..{end}, "
            f"iterations {plan.iterations}, scenarios {', '.join(labels)}",
            file=sys.stderr,
        )
        rows = bench.run_bench(plan)

    try:
        bench.emit_csv(rows, args.out)
        if args.json_out:
            bench.emit_json(rows, args.json_out)
    except OSError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_USAGE
    for row in rows:
        if row.status != "ok":
            print(
                f"q8s bench: {row.scenario} n={row.n} {row.status}: {row.reason}",
                file=sys.stderr,
            )
    return EXIT_JOB_FAILED if bench.any_scenario_failed(rows) else EXIT_OK


def _cmd_kernel(args: argparse.Namespace) -> int:
    path = Path(args.connection_file)
    if not path.exists():
        print(f"q8s: connection file {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    settings = KernelSettings(
        default_target=args.target,
        kubeconfig_path=args.kubeconfig,
        poll_interval_s=args.poll_interval,
        timeout_s=args.timeout,
    )
    serve_kernel(path, settings)
    return EXIT_OK


def _cmd_install_kernelspec(args: argparse.Namespace) -> int:
    try:
        spec_dir = install_kernelspec(args.user_dir)
    except OSError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"installed kernelspec at {spec_dir}")
    return EXIT_OK


def _cmd_fake_cluster(args: argparse.Namespace) -> int:
    if args.profile not in PROFILES:
        print(
            f"q8s: unknown profile {args.profile!r}; choose from {sorted(PROFILES)}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    host, _, port_text = args.listen.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        print(f"q8s: --listen expects HOST:PORT, got {args.listen!r}", file=sys.stderr)
        return EXIT_USAGE

    cluster = serve(args.profile, host=host or "127.0.0.1", port=port)
    if args.kubeconfig_out:
        kubeconfig_path = Path(args.kubeconfig_out)
    else:
        fd = tempfile.NamedTemporaryFile(
            mode="w", prefix="q8s-fake-", suffix=".kubeconfig", delete=False
        )
        kubeconfig_path = Path(fd.name)
        fd.close()
    kubeconfig_path.write_text(render_kubeconfig(cluster.endpoint))
    print(
        f"Q8S_FAKE_CLUSTER ready endpoint={cluster.endpoint} kubeconfig={kubeconfig_path}",
        flush=True,
    )
    print(
        f"q8s: serving profile {args.profile}; KUBECONFIG={kubeconfig_path} q8s run ...",
        file=sys.stderr,
    )
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        cluster.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "bench":
        return _cmd_bench(args, parser.error)
    if args.command == "kernel":
        return _cmd_kernel(args)
    if args.command == "install-kernelspec":
        return _cmd_install_kernelspec(args)
    if args.command == "fake-cluster":
        return _cmd_fake_cluster(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
