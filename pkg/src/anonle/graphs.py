"""Anonymous port-numbered graphs: the container, generators and the edge-list loader.

Nodes carry a 0-based internal index that only the simulator and the
analysis code ever see. Protocol automata only see port numbers
``1..deg(v)``.

Port rules are deterministic so that runs are reproducible:

* cycles: port 1 leads clockwise (to ``i+1``), port 2 counter-clockwise;
* generated families: neighbours sorted by internal index get ports ``1..deg``;
* edge lists: ports are handed out in order of first appearance of each
  incident edge in the file.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx

from .errors import (
    EdgeListParseError,
    GenerationFailure,
    GraphValidationError,
    InvalidParameterError,
)

MAX_GENERATION_ATTEMPTS = 64

Port = tuple[int, int]  # (neighbour index, neighbour's reciprocal port)


@dataclass(frozen=True)
class PortGraph:
    """Undirected, connected, simple graph with explicit port numbering.

    ``ports[v][p - 1] == (u, q)`` means port ``p`` of ``v`` leads to ``u``,
    where the link arrives on ``u``'s port ``q``.
    """

    ports: tuple[tuple[Port, ...], ...]
    name: str = ""

    def __post_init__(self) -> None:
        validate(self)

    @property
    def n(self) -> int:
        return len(self.ports)

    @property
    def m(self) -> int:
        return sum(len(p) for p in self.ports) // 2

    def degree(self, v: int) -> int:
        return len(self.ports[v])

    def degrees(self) -> list[int]:
        return [len(p) for p in self.ports]

    def neighbor(self, v: int, port: int) -> Port:
        return self.ports[v][port - 1]

    def neighbors(self, v: int) -> list[int]:
        return [u for u, _ in self.ports[v]]

    def edges(self) -> list[tuple[int, int]]:
        return [(v, u) for v in range(self.n) for u, _ in self.ports[v] if v < u]

    def adjacency_lists(self) -> list[list[int]]:
        return [self.neighbors(v) for v in range(self.n)]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges())
        return g

    def distances(self) -> list[list[int]]:
        """All-pairs hop distances by BFS from every node."""
        out = []
        for s in range(self.n):
            dist = [-1] * self.n
            dist[s] = 0
            queue = deque([s])
            while queue:
                v = queue.popleft()
                for u, _ in self.ports[v]:
                    if dist[u] < 0:
                        dist[u] = dist[v] + 1
                        queue.append(u)
            out.append(dist)
        return out

    def diameter(self) -> int:
        return max(max(row) for row in self.distances())

    def to_edge_list(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges())


def validate(g: PortGraph) -> None:
    """Check reciprocity, port permutation, simplicity and connectivity."""
    n = len(g.ports)
    if n < 1:
        raise GraphValidationError("graph must have at least one node")
    for v, plist in enumerate(g.ports):
        seen = set()
        for p, (u, q) in enumerate(plist, start=1):
            if not 0 <= u < n:
                raise GraphValidationError(f"node {v} port {p} leads to unknown node {u}")
            if u == v:
                raise GraphValidationError(f"self-loop at node {v}")
            if u in seen:
                raise GraphValidationError(f"parallel edge {v}-{u}")
            seen.add(u)
            if not 1 <= q <= len(g.ports[u]) or g.ports[u][q - 1] != (v, p):
                raise GraphValidationError(f"reciprocity broken at node {v} port {p}")
    if not _connected(g.ports):
        raise GraphValidationError("graph is disconnected")


def _connected(ports: Sequence[Sequence[Port]]) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u, _ in ports[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(ports)


def from_neighbor_orders(orders: Sequence[Sequence[int]], name: str = "") -> PortGraph:
    """Build a PortGraph where ``orders[v]`` lists v's neighbours in port order."""
    index = [{u: p for p, u in enumerate(order, start=1)} for order in orders]
    ports = []
    for v, order in enumerate(orders):
        row = []
        for u in order:
            if v not in index[u]:
                raise GraphValidationError(f"edge {v}-{u} is not symmetric")
            row.append((u, index[u][v]))
        ports.append(tuple(row))
    return PortGraph(tuple(ports), name=name)


def from_edges(n: int, edges: Iterable[tuple[int, int]], name: str = "") -> PortGraph:
    """Ports assigned by sorted neighbour index."""
    adj: list[set[int]] = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return from_neighbor_orders([sorted(a) for a in adj], name=name)


def from_networkx(g: nx.Graph, name: str = "") -> PortGraph:
    mapping = {v: i for i, v in enumerate(sorted(g.nodes()))}
    return from_edges(len(mapping), ((mapping[u], mapping[v]) for u, v in g.edges()), name=name)


def gen_cycle(n: int) -> PortGraph:
    if n < 3:
        raise InvalidParameterError(f"cycle needs n >= 3, got {n}")
    orders = [[(i + 1) % n, (i - 1) % n] for i in range(n)]
    return from_neighbor_orders(orders, name=f"C{n}")


def gen_path(n: int) -> PortGraph:
    if n < 1:
        raise InvalidParameterError(f"path needs n >= 1, got {n}")
    return from_edges(n, [(i, i + 1) for i in range(n - 1)], name=f"P{n}")


def gen_complete(n: int) -> PortGraph:
    if n < 1:
        raise InvalidParameterError(f"complete graph needs n >= 1, got {n}")
    return from_edges(n, [(u, v) for u in range(n) for v in range(u + 1, n)], name=f"K{n}")


def sub_seed(seed: int, attempt: int) -> int:
    digest = hashlib.blake2b(f"{seed}/{attempt}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def gen_random_regular(n: int, d: int, seed: int) -> PortGraph:
    if n < 1 or d < 1 or d >= n:
        raise InvalidParameterError(f"need 1 <= d < n, got n={n}, d={d}")
    if (n * d) % 2:
        raise InvalidParameterError(f"n*d must be even, got n={n}, d={d}")
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        g = nx.random_regular_graph(d, n, seed=sub_seed(seed, attempt) % 2**32)
        if nx.is_connected(g):
            return from_networkx(g, name=f"RR({n},{d})")
    raise GenerationFailure(f"no connected {d}-regular graph on {n} nodes after {MAX_GENERATION_ATTEMPTS} attempts")


def gen_erdos_renyi(n: int, p_edge: float, seed: int) -> PortGraph:
    if n < 1 or not 0.0 < p_edge <= 1.0:
        raise InvalidParameterError(f"need n >= 1 and 0 < p <= 1, got n={n}, p={p_edge}")
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        g = nx.gnp_random_graph(n, p_edge, seed=sub_seed(seed, attempt) % 2**32)
        if nx.is_connected(g):
            return from_networkx(g, name=f"G({n},{p_edge})")
    raise GenerationFailure(f"G({n},{p_edge}) stayed disconnected after {MAX_GENERATION_ATTEMPTS} attempts")


def load_edge_list(text: str, name: str = "") -> PortGraph:
    """Parse ``u v`` lines (0-based, ``#`` comments) into a PortGraph."""
    orders: dict[int, list[int]] = {}
    seen: set[frozenset[int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(lineno, f"expected 'u v', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(lineno, f"non-integer node index in {raw!r}") from None
        if u < 0 or v < 0:
            raise EdgeListParseError(lineno, "node indices must be non-negative")
        if u == v:
            raise EdgeListParseError(lineno, f"self-loop at node {u}")
        key = frozenset((u, v))
        if key in seen:
            raise EdgeListParseError(lineno, f"duplicate edge {u}-{v}")
        seen.add(key)
        orders.setdefault(u, []).append(v)
        orders.setdefault(v, []).append(u)
    if not orders:
        raise GraphValidationError("edge list is empty")
    n = max(orders) + 1
    missing = [v for v in range(n) if v not in orders]
    if missing:
        raise GraphValidationError(f"disconnected: isolated node(s) {missing[:5]}")
    g_orders = [orders[v] for v in range(n)]
    if not _connected([[(u, 0) for u in o] for o in g_orders]):
        raise GraphValidationError("graph is disconnected")
    return from_neighbor_orders(g_orders, name=name)


def single_node() -> PortGraph:
    return PortGraph(((),), name="K1")


def make_family(family: str, n: int, seed: int = 0, degree: int = 4, p_edge: float = 0.1) -> PortGraph:
    """Named families used by the harness and CLI."""
    family = family.lower()
    if family in ("cycle", "c"):
        return gen_cycle(n)
    if family in ("complete", "k"):
        return gen_complete(n)
    if family in ("path", "p"):
        return gen_path(n)
    if family in ("random-regular", "rr", "regular"):
        return gen_random_regular(n, degree, seed)
    if family in ("erdos-renyi", "er", "gnp"):
        return gen_erdos_renyi(n, p_edge, seed)
    raise InvalidParameterError(f"unknown graph family {family!r}")
