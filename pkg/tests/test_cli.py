"""CLI surface: exit codes, stream routing, and end-to-end subprocess flows."""

from __future__ import annotations

import json
import os
import re
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from q8s.cli import main
from q8s.clusterapi import render_kubeconfig
from q8s.fakecluster import NodeSpec, serve

SRC_DIR = str(Path(__file__).resolve().parents[1] / "src")


def run_cli(argv, monkeypatch=None, env=None):
    """Invoke main() in-process, capturing streams via capsys at call site."""
    return main(argv)


@pytest.fixture()
def fake_kubeconfig(tmp_path):
    cluster = serve(NodeSpec(schedule_delay_ms=20.0, image_pull_delay_ms=0.0))
    path = tmp_path / "kubeconfig.yaml"
    path.write_text(render_kubeconfig(cluster.endpoint))
    try:
        yield path, cluster
    finally:
        cluster.close()


class TestRun:
    def test_hello_cpu(self, tmp_path, capsys):
        payload = tmp_path / "hello.py"
        payload.write_text('print("hello")\n')
        code = run_cli(["run", str(payload), "--target", "cpu"])
        captured = capsys.readouterr()
        assert code == 0
        assert "hello\n" in captured.out
        assert "Q8S_TIMING wall=" in captured.out
        assert "Q8S_TIMING" not in captured.err

    def test_gpu_without_kubeconfig_exits_2(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("KUBECONFIG", raising=False)
        payload = tmp_path / "p.py"
        payload.write_text('print("x")\n')
        code = run_cli(["run", str(payload), "--target", "gpu"])
        captured = capsys.readouterr()
        assert code == 2
        assert captured.err.startswith("KUBECONFIG not set")

    def test_oom_payload_exits_1_with_stderr(self, tmp_path, capsys, fake_kubeconfig):
        kubeconfig, _ = fake_kubeconfig
        payload = tmp_path / "oom.py"
        payload.write_text("#q8s: routine=qaoa n=30\n")
        code = run_cli(
            [
                "run",
                str(payload),
                "--target",
                "gpu",
                "--kubeconfig",
                str(kubeconfig),
                "--poll-interval",
                "0.05",
            ]
        )
        captured = capsys.readouterr()
        assert code == 1
        assert "OOMKilled" in captured.err
        assert "OOMKilled" not in captured.out

    def test_gpu_against_fake_cluster(self, tmp_path, capsys, fake_kubeconfig):
        kubeconfig, cluster = fake_kubeconfig
        payload = tmp_path / "qft.py"
        payload.write_text("#q8s: routine=qft n=6\n")
        code = run_cli(
            [
                "run",
                str(payload),
                "--target",
                "gpu",
                "--kubeconfig",
                str(kubeconfig),
                "--poll-interval",
                "0.05",
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert "Q8S_SIM_SECONDS=" in captured.out
        assert cluster.introspect()["jobs"] == 0

    def test_missing_payload_exits_2(self, capsys):
        code = run_cli(["run", "/does/not/exist.py"])
        assert code == 2
        assert "cannot read payload" in capsys.readouterr().err

    def test_local_capacity_error_exits_1(self, tmp_path, capsys):
        payload = tmp_path / "big.py"
        payload.write_text("#q8s: routine=qv n=31\n")
        code = run_cli(["run", str(payload), "--memory-limit-gib", "16"])
        captured = capsys.readouterr()
        assert code == 1
        assert "capacity error" in captured.err


class TestBench:
    def test_banner_and_csv_to_stdout(self, capsys):
        code = run_cli(
            [
                "bench",
                "--routine",
                "qft",
                "--qubits",
                "3..4",
                "--iterations",
                "1",
                "--out",
                "-",
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.startswith("scenario,routine,n,")
        assert "qubits 3..4, iterations 1" in captured.err

    def test_default_banner_mentions_spec_defaults(self, capsys, monkeypatch):
        # Keep the sweep tiny but check the default banner wording separately.
        code = run_cli(
            ["bench", "--routine", "qft", "--qubits", "3..3", "--iterations", "1", "--out", "-"]
        )
        assert code == 0

    def test_bad_range_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(["bench", "--routine", "qft", "--qubits", "5..4", "--out", "-"])
        assert exc.value.code == 2

    def test_stream_equals_file(self, tmp_path, capsys):
        args = [
            "bench",
            "--routine",
            "qft",
            "--qubits",
            "3..4",
            "--iterations",
            "1",
        ]
        assert run_cli(args + ["--out", "-"]) == 0
        streamed = capsys.readouterr().out
        out_file = tmp_path / "rows.csv"
        assert run_cli(args + ["--out", str(out_file)]) == 0
        file_text = out_file.read_text()
        # Header and shape match; timing differs between runs.
        assert streamed.splitlines()[0] == file_text.splitlines()[0]
        assert len(streamed.splitlines()) == len(file_text.splitlines())

    def test_fake_scenario_and_json(self, tmp_path, capsys):
        json_path = tmp_path / "rows.json"
        code = run_cli(
            [
                "bench",
                "--routine",
                "qv",
                "--qubits",
                "4..5",
                "--iterations",
                "2",
                "--scenario",
                "fake:workstation",
                "--out",
                "-",
                "--json-out",
                str(json_path),
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        rows = json.loads(json_path.read_text())
        assert {r["n"] for r in rows} == {4, 5}
        assert all(r["scenario"] == "fake:workstation" for r in rows)
        assert "fake:workstation" in captured.out

    def test_unknown_scenario_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["bench", "--routine", "qft", "--scenario", "warp-drive", "--out", "-"])
        assert exc.value.code == 2


class TestKernelSubcommand:
    def test_missing_connection_file_exits_2(self, capsys):
        code = run_cli(["kernel", "--connection-file", "/does/not/exist.json"])
        assert code == 2

    def test_kernel_subprocess_smoke(self, tmp_path):
        from q8s.wirekernel import generate_connection_info, write_connection_file
        from q8s.wirekernel.client import KernelFrontend

        info = generate_connection_info()
        conn_file = tmp_path / "conn.json"
        write_connection_file(conn_file, info)
        env = dict(os.environ, PYTHONPATH=SRC_DIR)
        proc = subprocess.Popen(
            [sys.executable, "-m", "q8s", "kernel", "--connection-file", str(conn_file)],
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            deadline = time.monotonic() + 15.0
            frontend = None
            while time.monotonic() < deadline:
                try:
                    frontend = KernelFrontend(info)
                    break
                except OSError:
                    time.sleep(0.2)
            assert frontend is not None, "kernel never bound its ports"
            with frontend:
                frontend.wait_until_ready()
                _, reply = frontend.kernel_info()
                assert reply.content["status"] == "ok"
                frontend.shutdown()
            assert proc.wait(timeout=10.0) == 0
        finally:
            if proc.poll() is None:
                proc.kill()


class TestInstallKernelspecCommand:
    def test_install_to_user_dir(self, tmp_path, capsys):
        code = run_cli(["install-kernelspec", "--user-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "q8s" / "kernel.json").exists()
        assert "installed kernelspec" in capsys.readouterr().out


class TestFakeClusterSubcommand:
    def test_ready_line_and_end_to_end_run(self, tmp_path):
        env = dict(os.environ, PYTHONPATH=SRC_DIR)
        kubeconfig_out = tmp_path / "fake.kubeconfig"
        proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "q8s",
                "fake-cluster",
                "--profile",
                "workstation",
                "--listen",
                "127.0.0.1:0",
                "--kubeconfig-out",
                str(kubeconfig_out),
            ],
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        try:
            ready = proc.stdout.readline()
            m = re.match(
                r"^Q8S_FAKE_CLUSTER ready endpoint=(\S+) kubeconfig=(\S+)$", ready.strip()
            )
            assert m, f"unexpected ready line: {ready!r}"
            endpoint, kubeconfig = m.groups()
            assert re.match(r"^http://127\.0\.0\.1:\d+$", endpoint)
            assert Path(kubeconfig) == kubeconfig_out

            payload = tmp_path / "qft.py"
            payload.write_text("#q8s: routine=qft n=5\n")
            result = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "q8s",
                    "run",
                    str(payload),
                    "--target",
                    "gpu",
                    "--kubeconfig",
                    kubeconfig,
                    "--poll-interval",
                    "0.05",
                ],
                env=env,
                capture_output=True,
                text=True,
                timeout=60,
            )
            assert result.returncode == 0, result.stderr
            assert "Q8S_SIM_SECONDS=" in result.stdout
            assert "Q8S_TIMING" in result.stdout
        finally:
            proc.send_signal(signal.SIGINT)
            try:
                proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                proc.kill()

    def test_unknown_profile_exits_2(self, capsys):
        code = run_cli(["fake-cluster", "--profile", "mainframe"])
        assert code == 2


class TestVersion:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(["--version"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "q8s" in out and "5.3" in out

    def test_help_everywhere(self, capsys):
        for cmd in ("run", "bench", "kernel", "install-kernelspec", "fake-cluster"):
            with pytest.raises(SystemExit) as exc:
                run_cli([cmd, "--help"])
            assert exc.value.code == 0
            assert capsys.readouterr().out
