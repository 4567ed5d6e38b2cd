"""Dense statevector simulation and memory-footprint accounting.

The simulator tracks all 2^n complex double-precision amplitudes; the
capacity check runs before any allocation so an infeasible circuit fails
fast with the required-vs-available byte counts.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from q8s.simkit.circuit import Circuit
from q8s.simkit.gates import gate_matrix

NORM_TOL = 1e-10

# Default cap for in-process simulation; callers size it to their box.
DEFAULT_MEMORY_LIMIT_BYTES = 16 * 1024**3


class Precision(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"


_BYTES_PER_AMPLITUDE = {Precision.SINGLE: 8, Precision.DOUBLE: 16}


@dataclass(frozen=True)
class MemoryEstimate:
    n_qubits: int
    precision: Precision
    bytes: int


def memory_estimate(n: int, precision: Precision = Precision.DOUBLE) -> MemoryEstimate:
    """Exact statevector footprint: bytes_per_amplitude * 2^n."""
    if n < 1:
        raise ValueError(f"n_qubits must be positive, got {n}")
    return MemoryEstimate(n, precision, _BYTES_PER_AMPLITUDE[precision] * 2**n)


class CapacityError(Exception):
    """Raised before allocation when a statevector would not fit."""

    def __init__(self, required_bytes: int, available_bytes: int) -> None:
        super().__init__(
            f"statevector needs {required_bytes} bytes but only "
            f"{available_bytes} bytes are available"
        )
        self.required_bytes = required_bytes
        self.available_bytes = available_bytes


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def apply_gate(state: np.ndarray, matrix: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    """Apply a k-qubit gate matrix to the given little-endian targets.

    The reshaped state tensor puts qubit q on axis n-1-q; the gate matrix
    indexes its local basis with targets[0] as the most significant bit.
    """
    k = len(targets)
    axes = [n - 1 - q for q in targets]
    tensor = state.reshape([2] * n)
    mat = matrix.reshape([2] * (2 * k))
    tensor = np.tensordot(mat, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(tensor, list(range(k)), axes).reshape(-1)


def run_statevector(
    circuit: Circuit,
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES,
) -> tuple[StateVector, float]:
    """Run the circuit on |0...0> and return (state, simulator seconds).

    The returned seconds cover gate application only, not allocation or
    capacity checking. Raises CapacityError before allocating when the
    double-precision statevector would exceed memory_limit_bytes.
    """
    est = memory_estimate(circuit.n_qubits, Precision.DOUBLE)
    if est.bytes > memory_limit_bytes:
        raise CapacityError(est.bytes, memory_limit_bytes)

    n = circuit.n_qubits
    state = np.zeros(2**n, dtype=complex)
    state[0] = 1.0
    matrices = [(gate_matrix(g), g.targets) for g in circuit.gates]

    start = time.perf_counter()
    for matrix, targets in matrices:
        state = apply_gate(state, matrix, targets, n)
    elapsed = time.perf_counter() - start

    result = StateVector(n, state)
    drift = abs(result.norm() - 1.0)
    if drift > NORM_TOL:
        raise RuntimeError(f"statevector norm drifted by {drift:.2e}")
    return result, elapsed
