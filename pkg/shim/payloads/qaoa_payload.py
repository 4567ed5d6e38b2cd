"""QAOA max-cut benchmark payload: ring cost Hamiltonian, 5 ansatz layers.

Random fixed parameters are bound before the run; the classical
optimization loop is deliberately not executed, only the circuit
simulation is timed.
"""

import os
import timeit

import numpy as np
from qiskit import transpile
from qiskit.circuit.library import QAOAAnsatz
from qiskit.quantum_info import SparsePauliOp
from qiskit.transpiler import CouplingMap
from qiskit_aer import AerSimulator

LAYERS = 5


def ring_maxcut_operator(n):
    terms = []
    for i in range(n):
        label = ["I"] * n
        label[i] = "Z"
        label[(i + 1) % n] = "Z"
        terms.append(("".join(reversed(label)), 1.0))
    return SparsePauliOp.from_list(terms)


def test_function(n=3, method="statevector", device="GPU"):
    cm = CouplingMap().from_full(n)
    backend = AerSimulator(method=method, device=device, coupling_map=cm)
    circuit = QAOAAnsatz(cost_operator=ring_maxcut_operator(n), reps=LAYERS)
    rng = np.random.default_rng(0)
    circuit = circuit.assign_parameters(rng.uniform(0, 2 * np.pi, circuit.num_parameters))
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
