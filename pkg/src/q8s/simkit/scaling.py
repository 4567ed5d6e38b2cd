"""Coarse closed-form gate-count scaling per routine.

These are the nominal scaling expressions used in benchmark reports:
qft -> n(n/2+1), qv -> dn/2, qaoa -> pn(n+1)+n. They are reporting values
only; the builders' exact counts are the ground truth and can differ
(e.g. qv exact count is d*floor(n/2)).
"""

from __future__ import annotations


def scaling_formula(
    routine: str,
    n: int,
    d: int | None = None,
    p: int | None = None,
) -> float:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if routine == "qft":
        return n * (n / 2 + 1)
    if routine == "qv":
        if d is None:
            raise ValueError("qv scaling needs the layer count d")
        return d * n / 2
    if routine == "qaoa":
        if p is None:
            raise ValueError("qaoa scaling needs the layer count p")
        return p * n * (n + 1) + n
    raise ValueError(f"unknown routine {routine!r}")
