"""Graph quantities that parameterise the protocols.

Exact values come from exhaustive cut enumeration (rational arithmetic);
above the enumeration cap only spectral estimates are available.

Two conductances are kept apart on purpose:

* ``conductance_exact`` is the graph conductance
  ``min |dS| / min(Vol S, Vol S^c)``;
* ``chain_conductance_exact`` is the conductance of a Markov chain
  ``min Q(S, S^c) / pi(S)`` over ``pi(S) <= 1/2``.

For the lazy simple random walk the second equals half the first.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import CapExceededError, NumericalFailure
from .graphs import PortGraph

ENUMERATION_CAP = 20
DENSE_CAP = 4096
SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 200_000
# C in t_mix <= C * log(n) / Phi^2 for the sanity band
MIXING_BAND_CONSTANT = 8


def _cut_tables(g: PortGraph, cap: int):
    n = g.n
    if n > cap:
        raise CapExceededError(
            f"exhaustive cut enumeration is capped at n={cap} (got n={n}); "
            "use conductance_spectral_bounds instead"
        )
    if n < 2:
        raise CapExceededError("cut quantities need at least two nodes")
    masks = np.arange(1, 2**n - 1, dtype=np.int64)
    bits = [(masks >> v) & 1 for v in range(n)]
    size = np.zeros_like(masks)
    vol = np.zeros_like(masks)
    for v in range(n):
        size += bits[v]
        vol += bits[v] * g.degree(v)
    cut = np.zeros_like(masks)
    for u, v in g.edges():
        cut += bits[u] ^ bits[v]
    return masks, size, vol, cut


def _exact_min(num: np.ndarray, den: np.ndarray) -> Fraction:
    ratio = num / den
    best = ratio.min()
    close = ratio <= best * (1 + 1e-9) + 1e-15
    pairs = set(zip(num[close].tolist(), den[close].tolist()))
    return min(Fraction(a, b) for a, b in pairs)


def conductance_exact(g: PortGraph, cap: int = ENUMERATION_CAP) -> Fraction:
    _, _, vol, cut = _cut_tables(g, cap)
    den = np.minimum(vol, 2 * g.m - vol)
    return _exact_min(cut, den)


def isoperimetric_exact(g: PortGraph, cap: int = ENUMERATION_CAP) -> Fraction:
    _, size, _, cut = _cut_tables(g, cap)
    keep = 2 * size <= g.n
    return _exact_min(cut[keep], size[keep])


def lazy_walk_matrix(g: PortGraph) -> list[list[Fraction]]:
    n = g.n
    P = [[Fraction(0)] * n for _ in range(n)]
    for v in range(n):
        P[v][v] = Fraction(1, 2)
        d = g.degree(v)
        for u in g.neighbors(v):
            P[v][u] += Fraction(1, 2 * d)
    return P


def lazy_walk_stationary(g: PortGraph) -> list[Fraction]:
    return [Fraction(g.degree(v), 2 * g.m) for v in range(g.n)]


def chain_conductance_exact(
    P: Sequence[Sequence[Fraction]], pi: Sequence[Fraction], cap: int = ENUMERATION_CAP
) -> Fraction:
    """Markov-chain conductance by enumerating every cut with ``pi(S) <= 1/2``."""
    n = len(P)
    if n > cap:
        raise CapExceededError(f"chain conductance enumeration is capped at n={cap}")
    best = None
    half = Fraction(1, 2)
    for mask in range(1, 2**n - 1):
        inside = [i for i in range(n) if mask >> i & 1]
        mass = sum((pi[i] for i in inside), Fraction(0))
        if mass > half:
            continue
        outside = [j for j in range(n) if not mask >> j & 1]
        flow = sum((pi[i] * P[i][j] for i in inside for j in outside), Fraction(0))
        value = flow / mass
        if best is None or value < best:
            best = value
    return best


def _symmetric_lazy(g: PortGraph) -> tuple[np.ndarray, np.ndarray]:
    n = g.n
    deg = np.array(g.degrees(), dtype=float)
    N = np.zeros((n, n))
    for u, v in g.edges():
        w = 0.5 / math.sqrt(deg[u] * deg[v])
        N[u, v] = N[v, u] = w
    N[np.diag_indices(n)] = 0.5
    top = np.sqrt(deg / deg.sum())
    return N, top


def second_eigenvalue_lazy(g: PortGraph, tol: float = SPECTRAL_TOL, max_iter: int = SPECTRAL_MAX_ITER) -> float:
    """Second-largest eigenvalue of the lazy walk by deflated power iteration.

    The lazy walk is similar to the symmetric matrix ``D^-1/2 A D^-1/2 / 2 + I/2``
    whose spectrum lies in ``[0, 1]``; projecting out the known top
    eigenvector ``sqrt(pi)`` leaves the second eigenvalue as the dominant one.
    """
    if g.n == 1:
        return 0.0
    N, top = _symmetric_lazy(g)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(g.n)
    v -= top * (top @ v)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = N @ v
        w -= top * (top @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new_lam = float(v @ w)
        v = w / nw
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            residual = np.linalg.norm(N @ v - top * (top @ (N @ v)) - new_lam * v)
            if residual <= math.sqrt(tol):
                return max(new_lam, 0.0)
        lam = new_lam
    raise NumericalFailure(f"power iteration did not converge in {max_iter} iterations")


def conductance_spectral_bounds(g: PortGraph) -> tuple[float, float]:
    """Cheeger sandwich ``(1-lam)/2 <= phi <= sqrt(2(1-lam))`` for the lazy-walk conductance."""
    lam = second_eigenvalue_lazy(g)
    gap = 1.0 - lam
    return gap / 2.0, math.sqrt(2.0 * gap)


def _lazy_integer_matrix(g: PortGraph) -> tuple[list[list[int]], int]:
    """Lazy walk as ``Pint / Q`` with integer entries."""
    n = g.n
    Q = 2 * reduce(math.lcm, g.degrees(), 1)
    M = [[0] * n for _ in range(n)]
    for v in range(n):
        M[v][v] = Q // 2
        share = Q // (2 * g.degree(v))
        for u in g.neighbors(v):
            M[v][u] += share
    return M, Q


def _int_matmul(A: list[list[int]], B: list[list[int]]) -> list[list[int]]:
    Bt = list(zip(*B))
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def _int_matpow(M: list[list[int]], t: int) -> list[list[int]]:
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


def _mixed_exact(g: PortGraph, t: int) -> bool:
    M, Q = _lazy_integer_matrix(g)
    Mt = _int_matpow(M, t)
    n, two_m = g.n, 2 * g.m
    Qt = Q**t
    for row in Mt:
        for v, val in enumerate(row):
            # |val/Qt - deg/2m| <= 1/(2n)
            if abs(val * two_m - g.degree(v) * Qt) * 2 * n > Qt * two_m:
                return False
    return True


EXACT_TIEBREAK_CAP = 64


def mixing_time_lazy(g: PortGraph, cap: int = DENSE_CAP, max_steps: int = 10**7) -> int:
    """Least t with ``max_{u,v} |P^t(u,v) - pi(v)| <= 1/(2n)`` for the lazy walk.

    Float matrix powers decide clear cases; within 1e-9 of the threshold
    the decision is redone in exact integer arithmetic (n <= 64).
    """
    n = g.n
    if n > cap:
        raise CapExceededError(f"dense mixing-time computation is capped at n={cap}")
    if n == 1:
        return 0
    deg = np.array(g.degrees(), dtype=float)
    pi = deg / deg.sum()
    P = np.zeros((n, n))
    for v in range(n):
        P[v, v] = 0.5
        for u in g.neighbors(v):
            P[v, u] += 0.5 / deg[v]
    limit = 1.0 / (2 * n)
    M = np.eye(n)
    for t in range(1, max_steps + 1):
        M = M @ P
        dev = float(np.abs(M - pi).max())
        if dev < limit - 1e-9:
            return t
        if dev <= limit + 1e-9 and (n > EXACT_TIEBREAK_CAP or _mixed_exact(g, t)):
            return t
    raise NumericalFailure(f"walk did not mix within {max_steps} steps")


@dataclass
class GraphMetrics:
    n: int
    m: int
    conductance: Fraction | float
    isoperimetric: Fraction | float | None
    t_mix: int
    method_tags: dict

    def to_json(self) -> str:
        def enc(x):
            if isinstance(x, Fraction):
                return str(x)
            return x

        d = asdict(self)
        d["conductance"] = enc(self.conductance)
        d["isoperimetric"] = enc(self.isoperimetric)
        return json.dumps(d, sort_keys=True)


def mixing_band(phi: float, n: int) -> tuple[float, float]:
    return 1.0 / phi, MIXING_BAND_CONSTANT * math.log(max(n, 2)) / phi**2


def compute_metrics(g: PortGraph) -> GraphMetrics:
    """Exact metrics when enumeration is affordable, spectral estimates otherwise.

    The spectral conductance estimate is the Cheeger lower bound on the graph
    conductance (twice the lower bound on the lazy-walk conductance).
    """
    if g.n == 1:
        return GraphMetrics(1, 0, Fraction(1), None, 0, {"conductance": "exact", "isoperimetric": "exact", "t_mix": "exact"})
    t_mix = mixing_time_lazy(g)
    if g.n <= ENUMERATION_CAP:
        phi = conductance_exact(g)
        iso = isoperimetric_exact(g)
        tags = {"conductance": "exact", "isoperimetric": "exact", "t_mix": "exact"}
        if iso < phi:
            raise NumericalFailure(f"isoperimetric number {iso} below conductance {phi}")
    else:
        lower, _ = conductance_spectral_bounds(g)
        phi = 2 * lower
        iso = None
        tags = {"conductance": "spectral-estimate", "isoperimetric": "unavailable", "t_mix": "exact"}
    lo, hi = mixing_band(float(phi), g.n)
    if not lo <= t_mix <= hi:
        warnings.warn(f"t_mix={t_mix} outside sanity band [{lo:.2f}, {hi:.2f}] for Phi={float(phi):.4f}")
    return GraphMetrics(g.n, g.m, phi, iso, t_mix, tags)
