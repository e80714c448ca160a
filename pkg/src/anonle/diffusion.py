"""Potential diffusion: one averaging step and its matrix form.

A step moves ``share = 1/D`` of every potential difference across each
edge, ``D = 2K``::

    phi'[v] = phi[v] + sum_{u ~ v} (phi[u] - phi[v]) / D

The step matrix ``S = I - L/D`` is symmetric and doubly stochastic, so the
total potential is conserved exactly.

Exact arithmetic keeps integer numerators over the common denominator
``D^t`` after ``t`` steps; fixed-point arithmetic keeps integers scaled by
``2^FIXED_BITS`` and floors each transfer.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from .graphs import PortGraph

FIXED_BITS = 64
FIXED_ONE = 1 << FIXED_BITS


def step_matrix_int(g: PortGraph, D: int) -> list[list[int]]:
    """``D * S`` as an integer matrix (diagonal ``D - deg``, off-diagonal 1 per edge)."""
    n = g.n
    M = [[0] * n for _ in range(n)]
    for v in range(n):
        M[v][v] = D - g.degree(v)
        for u in g.neighbors(v):
            M[v][u] = 1
    return M


def step_matrix_float(g: PortGraph, D: int) -> np.ndarray:
    return np.array(step_matrix_int(g, D), dtype=float) / D


def diffusion_step(potentials: Sequence[Fraction], g: PortGraph, share: Fraction,
                   alarmed: Sequence[bool] | None = None) -> list[Fraction]:
    """Reference step on rationals; alarmed nodes are pinned to 1."""
    out = []
    for v in range(g.n):
        if alarmed is not None and alarmed[v]:
            out.append(Fraction(1))
            continue
        phi = potentials[v]
        flow = sum((potentials[u] - phi for u in g.neighbors(v)), Fraction(0))
        out.append(phi + flow * share)
    return out


def step_exact(nums: Sequence[int], g: PortGraph, D: int) -> list[int]:
    """Numerators over ``D^t`` to numerators over ``D^(t+1)``."""
    out = []
    for v, plist in enumerate(g.ports):
        x = nums[v]
        out.append(x * (D - len(plist)) + sum(nums[u] for u, _ in plist))
    return out


def step_fixed(vals: Sequence[int], g: PortGraph, D: int) -> list[int]:
    out = []
    for v, plist in enumerate(g.ports):
        x = vals[v]
        out.append(x + (sum(vals[u] for u, _ in plist) - len(plist) * x) // D)
    return out


def _int_matmul(A, B):
    Bt = list(zip(*B))
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def int_matrix_power(M: list[list[int]], t: int) -> list[list[int]]:
    n = len(M)
    result = [[int(i == j) for j in range(n)] for i in range(n)]
    base = M
    while t:
        if t & 1:
            result = _int_matmul(result, base)
        t >>= 1
        if t:
            base = _int_matmul(base, base)
    return result


def power_float(g: PortGraph, D: int, t: int) -> np.ndarray:
    """``S^t`` via the symmetric eigendecomposition (entries accurate to ~1e-15)."""
    S = step_matrix_float(g, D)
    w, V = np.linalg.eigh(S)
    return (V * w**t) @ V.T


class BatchExactDiffusion:
    """Exact diffusion of many graphs at once.

    Numerators of all nodes of all graphs live in one object array (Python
    integers), neighbour sums use a CSR gather, and ``totals`` returns each
    graph's summed numerator; the common denominator is ``D^steps``.
    """

    def __init__(self, graphs: Sequence[PortGraph], D: int, initial: Sequence[Sequence[int]]):
        self.D = D
        nbr, nbr_off, self_w, starts = [], [], [], []
        off = 0
        for g in graphs:
            starts.append(off)
            for v in range(g.n):
                nbr_off.append(len(nbr))
                nbr.extend(off + u for u in g.neighbors(v))
                self_w.append(D - g.degree(v))
            off += g.n
        if any(g.degree(v) == 0 for g in graphs for v in range(g.n)):
            raise ValueError("batch diffusion needs graphs without isolated nodes")
        self.nbr = np.array(nbr, dtype=np.int64)
        self.nbr_off = np.array(nbr_off, dtype=np.int64)
        self.starts = np.array(starts, dtype=np.int64)
        self.self_w = np.array(self_w, dtype=object)
        flat = [int(x) for row in initial for x in row]
        if len(flat) != off:
            raise ValueError("initial potentials do not match the graphs")
        self.nums = np.array(flat, dtype=object)
        self.steps = 0

    def step(self) -> None:
        nums = self.nums
        self.nums = nums * self.self_w + np.add.reduceat(nums[self.nbr], self.nbr_off)
        self.steps += 1

    def totals(self) -> np.ndarray:
        return np.add.reduceat(self.nums, self.starts)
