import math
from fractions import Fraction

import pytest

import oracles
from anonle import catalog, graphs, metrics
from anonle.errors import CapExceededError


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_conductance_matches_bruteforce_on_small_catalogue(n):
    for g in catalog.connected_graphs(n)[:40]:
        nxg = g.to_networkx()
        assert metrics.conductance_exact(g) == oracles.conductance(nxg)
        assert metrics.isoperimetric_exact(g) == oracles.isoperimetric(nxg)


def test_known_values():
    assert metrics.conductance_exact(graphs.gen_complete(4)) == Fraction(2, 3)
    assert metrics.conductance_exact(graphs.gen_cycle(8)) == Fraction(1, 4)
    assert metrics.isoperimetric_exact(graphs.gen_cycle(8)) == Fraction(1, 2)
    assert metrics.conductance_exact(graphs.gen_complete(2)) == 1


def test_enumeration_cap():
    with pytest.raises(CapExceededError):
        metrics.conductance_exact(graphs.gen_cycle(21))


def test_chain_conductance_is_half_graph_conductance():
    for g in (graphs.gen_cycle(6), graphs.gen_complete(5), graphs.gen_path(5)):
        P = metrics.lazy_walk_matrix(g)
        pi = metrics.lazy_walk_stationary(g)
        assert metrics.chain_conductance_exact(P, pi) == metrics.conductance_exact(g) / 2


@pytest.mark.parametrize("g", [graphs.gen_complete(2), graphs.gen_complete(3), graphs.gen_cycle(4),
                               graphs.gen_cycle(8), graphs.gen_path(5), graphs.gen_complete(6)])
def test_mixing_time_matches_exact_oracle(g):
    assert metrics.mixing_time_lazy(g) == oracles.mixing_time(g.to_networkx())


def test_spectral_bounds_sandwich_exact_chain_conductance():
    for g in (graphs.gen_cycle(8), graphs.gen_complete(5), graphs.gen_random_regular(12, 3, seed=1)):
        lo, hi = metrics.conductance_spectral_bounds(g)
        chain = float(metrics.conductance_exact(g)) / 2
        assert lo - 1e-12 <= chain <= hi + 1e-12


def test_second_eigenvalue_of_cycle():
    n = 10
    lam = metrics.second_eigenvalue_lazy(graphs.gen_cycle(n))
    assert lam == pytest.approx(0.5 + 0.5 * math.cos(2 * math.pi / n), abs=1e-8)


def test_compute_metrics_switches_to_spectral_estimate():
    gm = metrics.compute_metrics(graphs.gen_cycle(24))
    assert gm.method_tags["conductance"] == "spectral-estimate"
    assert 0 < gm.conductance <= 1 / 6 + 1e-9
    small = metrics.compute_metrics(graphs.gen_cycle(8))
    assert small.method_tags["conductance"] == "exact"
    assert '"conductance": "1/4"' in small.to_json()


def test_single_node_metrics():
    gm = metrics.compute_metrics(graphs.single_node())
    assert gm.t_mix == 0 and gm.conductance == 1
