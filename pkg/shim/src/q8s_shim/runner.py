"""Run a mounted payload script and append the simulator-timing trailer.

The job container mounts the cell source at /app/main.py and this module
wraps it: the script's module-level code runs as-is (stdout untouched),
and when the script defines ``test_function`` the shim calls it and
appends exactly one line

    Q8S_SIM_SECONDS=<decimal seconds>

to stdout with the function's return value. Exit status is propagated
exactly: an explicit SystemExit keeps its code, an uncaught exception
prints its traceback on stderr and exits 1, a missing payload exits 2.

The script executes with ``__name__ == "__q8s_shim__"`` so an
``if __name__ == "__main__"`` block still supports bare, shim-less runs
without double-printing the trailer under the shim.

Call arguments for ``test_function`` are drawn from the environment
(Q8S_N as int, Q8S_METHOD, Q8S_DEVICE) and filtered to the parameters
the function actually declares, so defaults keep working.
"""

from __future__ import annotations

import argparse
import inspect
import os
import sys
import traceback

DEFAULT_PAYLOAD = "/app/main.py"
SIM_SECONDS_PREFIX = "Q8S_SIM_SECONDS="
EXEC_MODULE_NAME = "__q8s_shim__"

_ENV_PARAMS = (
    ("n", "Q8S_N", int),
    ("method", "Q8S_METHOD", str),
    ("device", "Q8S_DEVICE", str),
)


def _call_kwargs(func) -> dict:
    try:
        accepted = set(inspect.signature(func).parameters)
    except (TypeError, ValueError):
        return {}
    kwargs = {}
    for name, env_var, convert in _ENV_PARAMS:
        if name in accepted and env_var in os.environ:
            kwargs[name] = convert(os.environ[env_var])
    return kwargs


def wrap(payload_path: str) -> int:
    """Execute the payload and return the process exit code."""
    try:
        with open(payload_path, "r", encoding="utf-8") as handle:
            source = handle.read()
    except OSError as exc:
        print(f"q8s-shim: cannot read payload {payload_path}: {exc}", file=sys.stderr)
        return 2

    namespace: dict = {"__name__": EXEC_MODULE_NAME, "__file__": payload_path}
    try:
        code = compile(source, payload_path, "exec")
        exec(code, namespace)
        func = namespace.get("test_function")
        if callable(func):
            seconds = float(func(**_call_kwargs(func)))
            sys.stdout.flush()
            print(f"{SIM_SECONDS_PREFIX}{seconds!r}")
    except SystemExit as exc:
        if exc.code is None:
            return 0
        if isinstance(exc.code, int):
            return exc.code
        print(exc.code, file=sys.stderr)
        return 1
    except BaseException:
        traceback.print_exc()
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="q8s-shim", description="Run a payload script and emit the timing trailer."
    )
    parser.add_argument("payload", nargs="?", default=DEFAULT_PAYLOAD)
    args = parser.parse_args(argv)
    return wrap(args.payload)


if __name__ == "__main__":
    raise SystemExit(main())
