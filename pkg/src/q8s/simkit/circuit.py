"""Circuit value type: an ordered gate list on a fixed qubit count."""

from __future__ import annotations

from dataclasses import dataclass, field

from q8s.simkit.gates import Gate


@dataclass(frozen=True, eq=False)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]
    label: str = field(default="")

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        for g in self.gates:
            if any(t >= self.n_qubits for t in g.targets):
                raise ValueError(
                    f"{g.kind.name} targets {g.targets} out of range for "
                    f"{self.n_qubits} qubits"
                )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.label == other.label
            and len(self.gates) == len(other.gates)
            and all(a == b for a, b in zip(self.gates, other.gates))
        )

    @property
    def gate_count(self) -> int:
        return len(self.gates)
