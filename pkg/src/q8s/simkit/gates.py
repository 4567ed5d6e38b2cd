"""Gate vocabulary for the simulation kit.

Conventions (fixed here, relied on by the simulator and every oracle test):

- Qubits are little-endian: qubit 0 is the least significant bit of the
  amplitude index.
- Half-angle rotations: RZ(t) = diag(e^{-it/2}, e^{+it/2}) and
  RX(t) = [[cos(t/2), -i sin(t/2)], [-i sin(t/2), cos(t/2)]].
- Controlled phase CP(t) = diag(1, 1, 1, e^{it}) (symmetric in its targets).
- Two-qubit matrices index the local basis as 2*bit(targets[0]) +
  bit(targets[1]); for CX, targets[0] is the control.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

UNITARITY_TOL = 1e-10


class GateKind(enum.Enum):
    H = "h"
    RX = "rx"
    RZ = "rz"
    CX = "cx"
    CP = "cp"
    SWAP = "swap"
    U4 = "u4"


_ARITY = {
    GateKind.H: 1,
    GateKind.RX: 1,
    GateKind.RZ: 1,
    GateKind.CX: 2,
    GateKind.CP: 2,
    GateKind.SWAP: 2,
    GateKind.U4: 2,
}

_N_PARAMS = {
    GateKind.H: 0,
    GateKind.RX: 1,
    GateKind.RZ: 1,
    GateKind.CX: 0,
    GateKind.CP: 1,
    GateKind.SWAP: 0,
    GateKind.U4: 0,
}


def unitarity_defect(matrix: np.ndarray) -> float:
    """max|U†U - I| for a square matrix."""
    m = np.asarray(matrix, dtype=complex)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


@dataclass(frozen=True, eq=False)
class Gate:
    """One gate application: kind, ordered targets, angles, optional matrix."""

    kind: GateKind
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        arity = _ARITY[self.kind]
        if len(self.targets) != arity:
            raise ValueError(
                f"{self.kind.name} takes {arity} target(s), got {self.targets}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind.name} targets must be distinct: {self.targets}")
        if any(t < 0 for t in self.targets):
            raise ValueError(f"negative qubit index in {self.targets}")
        if len(self.params) != _N_PARAMS[self.kind]:
            raise ValueError(
                f"{self.kind.name} takes {_N_PARAMS[self.kind]} angle(s), got {self.params}"
            )
        if self.kind is GateKind.U4:
            if self.matrix is None or self.matrix.shape != (4, 4):
                raise ValueError("U4 requires a 4x4 matrix")
            defect = unitarity_defect(self.matrix)
            if defect > UNITARITY_TOL:
                raise ValueError(f"U4 matrix is not unitary (defect {defect:.2e})")
        elif self.matrix is not None:
            raise ValueError(f"{self.kind.name} does not carry a matrix")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Gate):
            return NotImplemented
        if (self.kind, self.targets, self.params) != (other.kind, other.targets, other.params):
            return False
        if (self.matrix is None) != (other.matrix is None):
            return False
        return self.matrix is None or bool(np.array_equal(self.matrix, other.matrix))


def h(target: int) -> Gate:
    return Gate(GateKind.H, (target,))


def rx(theta: float, target: int) -> Gate:
    return Gate(GateKind.RX, (target,), (theta,))


def rz(theta: float, target: int) -> Gate:
    return Gate(GateKind.RZ, (target,), (theta,))


def cx(control: int, target: int) -> Gate:
    return Gate(GateKind.CX, (control, target))


def cp(theta: float, a: int, b: int) -> Gate:
    return Gate(GateKind.CP, (a, b), (theta,))


def swap(a: int, b: int) -> Gate:
    return Gate(GateKind.SWAP, (a, b))


def u4(matrix: np.ndarray, a: int, b: int) -> Gate:
    return Gate(GateKind.U4, (a, b), matrix=np.asarray(matrix, dtype=complex))


_SQRT2_INV = 1.0 / math.sqrt(2.0)
_H_MAT = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV
_CX_MAT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
_SWAP_MAT = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def gate_matrix(gate: Gate) -> np.ndarray:
    """Dense matrix of the gate on its own targets (2x2 or 4x4)."""
    if gate.kind is GateKind.H:
        return _H_MAT
    if gate.kind is GateKind.RX:
        t = gate.params[0] / 2.0
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if gate.kind is GateKind.RZ:
        t = gate.params[0] / 2.0
        return np.array([[np.exp(-1j * t), 0], [0, np.exp(1j * t)]], dtype=complex)
    if gate.kind is GateKind.CX:
        return _CX_MAT
    if gate.kind is GateKind.CP:
        m = np.eye(4, dtype=complex)
        m[3, 3] = np.exp(1j * gate.params[0])
        return m
    if gate.kind is GateKind.SWAP:
        return _SWAP_MAT
    if gate.kind is GateKind.U4:
        assert gate.matrix is not None
        return gate.matrix
    raise AssertionError(f"unhandled gate kind {gate.kind}")
