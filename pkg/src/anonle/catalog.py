"""Every connected simple graph on up to eight nodes, up to isomorphism.

Graphs with n <= 7 come from networkx's graph atlas. The 11117 graphs on
eight nodes are generated once by extending each connected 7-node graph with
a vertex attached to a non-empty neighbour set (every connected graph has a
non-cut vertex, so nothing is missed) and deduplicating by Weisfeiler-Lehman
hash plus an isomorphism check. The result ships as graph6 data.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from itertools import combinations

import networkx as nx

from .errors import InvalidParameterError
from .graphs import PortGraph, from_networkx

# OEIS A001349, connected graphs on n unlabeled nodes
CONNECTED_COUNTS = {1: 1, 2: 1, 3: 2, 4: 6, 5: 21, 6: 112, 7: 853, 8: 11117}
DATA_FILE = "connected8.g6"


def _atlas_connected(n: int) -> list[nx.Graph]:
    return [g for g in nx.graph_atlas_g() if g.number_of_nodes() == n and nx.is_connected(g)]


def extend_by_one(graphs: list[nx.Graph]) -> list[nx.Graph]:
    """Non-isomorphic connected graphs on one more node than ``graphs``."""
    buckets: dict[str, list[nx.Graph]] = {}
    out = []
    for g in graphs:
        n = g.number_of_nodes()
        for size in range(1, n + 1):
            for nbrs in combinations(range(n), size):
                h = g.copy()
                h.add_edges_from((n, u) for u in nbrs)
                key = nx.weisfeiler_lehman_graph_hash(h, iterations=3)
                bucket = buckets.setdefault(key, [])
                if any(nx.is_isomorphic(h, other) for other in bucket):
                    continue
                bucket.append(h)
                out.append(h)
    return out


def generate_connected8() -> list[nx.Graph]:
    return extend_by_one(_atlas_connected(7))


def write_connected8(path) -> int:
    graphs = generate_connected8()
    with open(path, "wb") as fh:
        for g in graphs:
            fh.write(nx.to_graph6_bytes(nx.convert_node_labels_to_integers(g), header=False))
    return len(graphs)


@lru_cache(maxsize=None)
def _connected_nx(n: int) -> tuple[nx.Graph, ...]:
    if n in range(1, 8):
        return tuple(_atlas_connected(n))
    if n == 8:
        data = resources.files("anonle.data").joinpath(DATA_FILE).read_bytes()
        return tuple(nx.from_graph6_bytes(line) for line in data.splitlines() if line)
    raise InvalidParameterError(f"catalogue covers 1 <= n <= 8, got {n}")


def connected_graphs(n: int) -> list[PortGraph]:
    """All connected graphs on ``n`` nodes as PortGraphs (sorted-neighbour ports)."""
    return [from_networkx(g, name=f"conn{n}#{i}") for i, g in enumerate(_connected_nx(n))]


def connected_graphs_upto(n_max: int) -> list[PortGraph]:
    out = []
    for n in range(1, n_max + 1):
        out.extend(connected_graphs(n))
    return out
