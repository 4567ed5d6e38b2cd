"""Statevector simulation kit: benchmark circuit builders and a dense simulator."""

from q8s.simkit.builders import (
    ROUTINES,
    build_qaoa_maxcut_ring,
    build_qft,
    build_qv,
    build_routine,
    sample_su4,
)
from q8s.simkit.circuit import Circuit
from q8s.simkit.gates import Gate, GateKind, gate_matrix, unitarity_defect
from q8s.simkit.scaling import scaling_formula
from q8s.simkit.simulate import (
    DEFAULT_MEMORY_LIMIT_BYTES,
    CapacityError,
    MemoryEstimate,
    Precision,
    StateVector,
    apply_gate,
    memory_estimate,
    run_statevector,
)

__all__ = [
    "ROUTINES",
    "build_qaoa_maxcut_ring",
    "build_qft",
    "build_qv",
    "build_routine",
    "sample_su4",
    "Circuit",
    "Gate",
    "GateKind",
    "gate_matrix",
    "unitarity_defect",
    "scaling_formula",
    "DEFAULT_MEMORY_LIMIT_BYTES",
    "CapacityError",
    "MemoryEstimate",
    "Precision",
    "StateVector",
    "apply_gate",
    "memory_estimate",
    "run_statevector",
]
