"""QFT benchmark payload.

Builds the exact QFT circuit, transpiles against a fully connected
coupling map (a routing no-op), and times only the simulator run.
Needs qiskit==1.0.0 and qiskit-aer==0.13.3 in the execution image.
"""

import os
import timeit

from qiskit import transpile
from qiskit.circuit.library import QFT
from qiskit.transpiler import CouplingMap
from qiskit_aer import AerSimulator


def test_function(n=3, method="statevector", device="GPU"):
    cm = CouplingMap().from_full(n)
    backend = AerSimulator(method=method, device=device, coupling_map=cm)
    circuit = QFT(num_qubits=n)
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
