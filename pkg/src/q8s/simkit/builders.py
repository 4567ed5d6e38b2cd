"""Builders for the three benchmark routines: QFT, quantum volume, QAOA.

Each builder emits an explicit, fixed gate-level construction so gate counts
are exact closed forms:

- qft:  n + n(n-1)/2 + floor(n/2)
- qv:   d * floor(n/2)
- qaoa: n + 4*p*n   (ring cost terms decomposed as CX, RZ, CX)

All builders are deterministic for a fixed seed.
"""

from __future__ import annotations

import math

import numpy as np

from q8s.simkit.circuit import Circuit
from q8s.simkit.gates import Gate, cp, cx, h, rx, rz, swap, u4

QFT_MAX_QUBITS = 30


def build_qft(n: int) -> Circuit:
    """Quantum Fourier Transform.

    For qubit j from n-1 down to 0: one H on j, then CP(pi/2^(j-k)) between
    each k < j and j; finally floor(n/2) SWAPs reversing qubit order so the
    circuit equals the DFT matrix in little-endian indexing.
    """
    if not 1 <= n <= QFT_MAX_QUBITS:
        raise ValueError(f"qft qubit count must be in 1..{QFT_MAX_QUBITS}, got {n}")
    gates: list[Gate] = []
    for j in range(n - 1, -1, -1):
        gates.append(h(j))
        for k in range(j - 1, -1, -1):
            gates.append(cp(math.pi / 2 ** (j - k), k, j))
    for i in range(n // 2):
        gates.append(swap(i, n - 1 - i))
    return Circuit(n, tuple(gates), label="qft")


def sample_su4(rng: np.random.Generator) -> np.ndarray:
    """Haar-random SU(4) matrix via the Ginibre-QR construction.

    Draw a 4x4 matrix of i.i.d. standard complex Gaussians, QR-factorize,
    fix the column phases to the normalized diagonal of R (Haar on U(4)),
    then divide by det^(1/4) to land in SU(4). Re-draws on a numerically
    singular R diagonal, which has probability zero.
    """
    while True:
        z = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / math.sqrt(2)
        q, r = np.linalg.qr(z)
        diag = np.diagonal(r)
        if np.min(np.abs(diag)) < 1e-12:
            continue
        q = q * (diag / np.abs(diag))
        det = np.linalg.det(q)
        return q / det ** 0.25


def build_qv(n: int, d: int, seed: int) -> Circuit:
    """Quantum volume circuit: d layers of Haar-random SU(4) gates.

    Each layer draws a seeded uniform permutation of the qubits, pairs them
    into floor(n/2) disjoint pairs (odd qubit out sits the layer out), and
    applies one SU(4) per pair.
    """
    if n < 2:
        raise ValueError(f"qv needs at least 2 qubits, got {n}")
    if d < 1:
        raise ValueError(f"qv needs at least 1 layer, got {d}")
    rng = np.random.default_rng(seed)
    gates: list[Gate] = []
    for _ in range(d):
        perm = rng.permutation(n)
        for i in range(n // 2):
            a, b = int(perm[2 * i]), int(perm[2 * i + 1])
            gates.append(u4(sample_su4(rng), a, b))
    return Circuit(n, tuple(gates), label="qv")


def build_qaoa_maxcut_ring(n: int, p: int, seed: int) -> Circuit:
    """QAOA ansatz for max-cut on the n-cycle (the 2-regular graph).

    One H layer, then p rounds of cost terms CX(i,j) RZ(2*gamma) CX(i,j)
    over every ring edge (i, i+1 mod n) followed by a mixer RX(2*beta) on
    every qubit. Angles are drawn uniformly from [0, 2*pi) per round; the
    classical optimization loop is not executed.
    """
    if n < 3:
        raise ValueError(f"qaoa ring needs at least 3 qubits, got {n}")
    if p < 1:
        raise ValueError(f"qaoa needs at least 1 layer, got {p}")
    rng = np.random.default_rng(seed)
    gates: list[Gate] = [h(q) for q in range(n)]
    for _ in range(p):
        gamma = rng.uniform(0.0, 2.0 * math.pi)
        beta = rng.uniform(0.0, 2.0 * math.pi)
        for i in range(n):
            j = (i + 1) % n
            gates.append(cx(i, j))
            gates.append(rz(2.0 * gamma, j))
            gates.append(cx(i, j))
        for q in range(n):
            gates.append(rx(2.0 * beta, q))
    return Circuit(n, tuple(gates), label="qaoa")


ROUTINES = ("qft", "qv", "qaoa")


def build_routine(routine: str, n: int, d: int = 20, p: int = 5, seed: int = 0) -> Circuit:
    """Dispatch to a builder by routine name."""
    if routine == "qft":
        return build_qft(n)
    if routine == "qv":
        return build_qv(n, d, seed)
    if routine == "qaoa":
        return build_qaoa_maxcut_ring(n, p, seed)
    raise ValueError(f"unknown routine {routine!r}; expected one of {ROUTINES}")
