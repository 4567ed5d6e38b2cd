"""Quantum-volume benchmark payload: 20 layers of Haar-random SU(4) pairs."""

import os
import timeit

from qiskit import transpile
from qiskit.circuit.library import QuantumVolume
from qiskit.transpiler import CouplingMap
from qiskit_aer import AerSimulator

DEPTH = 20


def test_function(n=3, method="statevector", device="GPU"):
    cm = CouplingMap().from_full(n)
    backend = AerSimulator(method=method, device=device, coupling_map=cm)
    circuit = QuantumVolume(num_qubits=n, depth=DEPTH, seed=0)
    circuit.save_state()
    circuit = transpile(circuit, backend=backend, coupling_map=cm)

    start = timeit.default_timer()
    backend.run(circuit).result()
    end = timeit.default_timer()
    return end - start


if __name__ == "__main__":
    n = int(os.environ.get("Q8S_N", "3"))
    device = os.environ.get("Q8S_DEVICE", "GPU")
    print(f"Q8S_SIM_SECONDS={test_function(n, device=device)!r}")
