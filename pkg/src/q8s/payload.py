"""Payload execution shared by the local path and the fake cluster's runner.

A payload is executable cell text. A single directive line, anywhere in the
text, selects a built-in simulation routine:

    #q8s: routine=<qft|qv|qaoa> n=<int> [d=<int>] [p=<int>] [seed=<int>]

Runs that simulate emit a machine-readable trailer line on stdout:

    Q8S_SIM_SECONDS=<decimal seconds>

Payloads without a directive are not executed as code; a trivial line
interpreter echoes their literal print("...") statements so hello-world
cells behave as expected at desk scale.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from q8s.clock import Clock
from q8s.simkit import (
    DEFAULT_MEMORY_LIMIT_BYTES,
    CapacityError,
    Circuit,
    build_routine,
    run_statevector,
)

SIM_SECONDS_PREFIX = "Q8S_SIM_SECONDS="

_DIRECTIVE_RE = re.compile(r"^\s*#q8s:\s*(.*)$")
_PRINT_RE = re.compile(r"""^\s*print\((['"])(.*)\1\)\s*$""")
_INT_KEYS = ("n", "d", "p", "seed")

# Synthetic per-amplitude gate costs for deterministic (virtual-clock) timing;
# sized so a 16-qubit sweep crosses a multi-second dispatch overhead.
MODELED_SECONDS_1Q = 2.5e-7
MODELED_SECONDS_2Q = 5.0e-7


class DirectiveError(Exception):
    """Malformed `#q8s:` directive line."""


@dataclass(frozen=True)
class Directive:
    routine: str
    n: int
    d: int = 20
    p: int = 5
    seed: int = 0


@dataclass(frozen=True)
class PayloadOutcome:
    exit_code: int
    stdout: str
    reason: str | None = None


def find_directive(source: str) -> Directive | None:
    """Return the parsed directive, or None when the payload has none."""
    for line in source.splitlines():
        m = _DIRECTIVE_RE.match(line)
        if m is None:
            continue
        fields: dict[str, str] = {}
        body = m.group(1).strip()
        for token in body.split():
            if "=" not in token:
                raise DirectiveError(f"expected key=value, got {token!r}")
            key, _, value = token.partition("=")
            fields[key] = value
        routine = fields.pop("routine", None)
        if routine is None:
            raise DirectiveError("directive missing routine=")
        if routine not in ("qft", "qv", "qaoa"):
            raise DirectiveError(f"unknown routine {routine!r}")
        kwargs: dict[str, int] = {}
        for key in _INT_KEYS:
            if key in fields:
                raw = fields.pop(key)
                try:
                    kwargs[key] = int(raw)
                except ValueError:
                    raise DirectiveError(f"{key} must be an integer, got {raw!r}") from None
        if fields:
            raise DirectiveError(f"unknown directive key(s): {sorted(fields)}")
        if "n" not in kwargs:
            raise DirectiveError("directive missing n=")
        return Directive(routine=routine, **kwargs)
    return None


def build_directive_circuit(directive: Directive) -> Circuit:
    return build_routine(
        directive.routine, directive.n, d=directive.d, p=directive.p, seed=directive.seed
    )


def modeled_sim_seconds(circuit: Circuit) -> float:
    """Deterministic stand-in for measured simulator time."""
    one_q = sum(1 for g in circuit.gates if len(g.targets) == 1)
    two_q = circuit.gate_count - one_q
    return (MODELED_SECONDS_1Q * one_q + MODELED_SECONDS_2Q * two_q) * 2**circuit.n_qubits


def format_sim_seconds(seconds: float) -> str:
    return f"{SIM_SECONDS_PREFIX}{seconds!r}"


def parse_sim_seconds(stdout: str) -> float | None:
    """Extract the simulator seconds trailer from captured stdout, if any."""
    value: float | None = None
    for line in stdout.splitlines():
        if line.startswith(SIM_SECONDS_PREFIX):
            try:
                value = float(line[len(SIM_SECONDS_PREFIX) :])
            except ValueError:
                continue
    return value


def _echo_prints(source: str) -> str:
    out = []
    for line in source.splitlines():
        m = _PRINT_RE.match(line)
        if m is not None:
            out.append(m.group(2) + "\n")
    return "".join(out)


def _state_summary(circuit: Circuit, state) -> str:
    probs = abs(state.amplitudes) ** 2
    return (
        f"Q8S_STATE routine={circuit.label} n={circuit.n_qubits} "
        f"gates={circuit.gate_count} norm={state.norm():.12f} "
        f"p_min={float(probs.min()):.6e} p_max={float(probs.max()):.6e}\n"
    )


def run_payload(
    source: str,
    *,
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES,
    speed_factor: float = 1.0,
    modeled_time: bool = False,
    advance_clock: Clock | None = None,
) -> PayloadOutcome:
    """Execute a payload in-process and capture its stdout.

    speed_factor divides the reported simulator seconds (a faster device).
    With modeled_time the reported seconds come from the deterministic cost
    model instead of measurement; advance_clock, when given, is slept for
    the reported duration so clock-derived wall times stay consistent.
    Capacity violations surface as exit 1 with the diagnostic on stdout.
    """
    try:
        directive = find_directive(source)
    except DirectiveError as exc:
        return PayloadOutcome(1, f"q8s directive error: {exc}\n", reason="DirectiveError")

    if directive is None:
        return PayloadOutcome(0, _echo_prints(source))

    try:
        circuit = build_directive_circuit(directive)
    except ValueError as exc:
        return PayloadOutcome(1, f"q8s directive error: {exc}\n", reason="DirectiveError")

    try:
        state, measured = run_statevector(circuit, memory_limit_bytes=memory_limit_bytes)
    except CapacityError as exc:
        return PayloadOutcome(1, f"q8s capacity error: {exc}\n", reason="CapacityError")

    seconds = modeled_sim_seconds(circuit) if modeled_time else measured
    seconds /= speed_factor
    if advance_clock is not None:
        advance_clock.sleep(seconds)

    stdout = _echo_prints(source)
    stdout += _state_summary(circuit, state)
    stdout += format_sim_seconds(seconds) + "\n"
    return PayloadOutcome(0, stdout)


__all__ = [
    "Directive",
    "DirectiveError",
    "PayloadOutcome",
    "SIM_SECONDS_PREFIX",
    "build_directive_circuit",
    "find_directive",
    "format_sim_seconds",
    "modeled_sim_seconds",
    "parse_sim_seconds",
    "run_payload",
]
