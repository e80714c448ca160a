import csv
import io
import math
from fractions import Fraction

import pytest

from anonle import graphs, revocable
from anonle.errors import InvalidParameterError
from anonle.metrics import isoperimetric_exact
from anonle.revocable import LOW, PROBING, RevocableNode, decide, schedule, view_better


def test_schedule_worked_example():
    s = schedule(4, 1, 0.1, Fraction(1, 2))
    assert s.K == 16
    assert s.r == 65584
    assert s.p == math.log(2) / 16
    assert s.tau == Fraction(14, 15)
    assert s.f == 168


def test_schedule_without_isoperimetric_number():
    s = schedule(2, 1, 0.1)
    # 2 * 2^6 * log2(16) + 4 * log2(4)
    assert s.r == 2 * 64 * 4 + 8


def test_schedule_scales_apply_last():
    s = schedule(4, 1, 0.1, Fraction(1, 2), r_scale=Fraction(1, 1000), f_scale=Fraction(1, 2))
    assert s.r_formula == 65584 and s.r == math.ceil(Fraction(65584, 1000))
    assert s.f == 84 and s.scaled


@pytest.mark.parametrize("kwargs", [
    dict(k=3), dict(k=1), dict(k=4, epsilon=0), dict(k=4, epsilon=2), dict(k=4, xi=1.0),
    dict(k=4, i_G=0), dict(k=4, i_G=17), dict(k=4, r_scale=0),
])
def test_schedule_rejects_bad_parameters(kwargs):
    with pytest.raises(InvalidParameterError):
        schedule(**kwargs)


def test_fractional_epsilon():
    s = schedule(4, Fraction(1, 2))
    assert s.K == 8  # 4^1.5


def test_default_estimates():
    assert revocable.default_k_values(8) == [2, 4, 8, 16]
    assert revocable.default_k_values(1) == [2, 4, 8]


def test_certificate_order():
    assert view_better((8, 3), (8, 5))
    assert not view_better((8, 5), (8, 3))
    assert view_better((16, 99), (8, 3))
    assert view_better((2, 1), None) and not view_better(None, (2, 1))
    assert revocable.best_view([(8, 5), None, (8, 3), (4, 1)]) == (8, 3)


def test_decision_rule():
    assert decide(None, [True, True, False, True], [LOW, PROBING, LOW, LOW])
    assert not decide(None, [True, True, False, True], [LOW] * 4)
    assert not decide(None, [True, True, False, False], [PROBING] * 4)  # exactly half is not a majority
    assert not decide(17, [True] * 4, [PROBING] * 4)


def _lockstep_dissemination(g, nodes, rounds):
    for node in nodes:
        node.phase = "dissemination"
    for _ in range(rounds):
        payloads = [node._payload() for node in nodes]
        inboxes = [{p: payloads[u] for p, (u, _) in enumerate(g.ports[v], start=1)} for v in range(g.n)]
        for node, inbox in zip(nodes, inboxes):
            node._dissemination_receive(inbox)


def test_low_floods_a_path_of_length_K():
    s = schedule(2)
    g = graphs.gen_path(s.K + 1)
    nodes = [RevocableNode(v, g.degree(v), 0, [s]) for v in range(g.n)]
    nodes[0].q = LOW
    _lockstep_dissemination(g, nodes, s.K)
    assert all(node.q == LOW for node in nodes)


def test_views_fold_to_best_certificate():
    s = schedule(2)
    g = graphs.gen_path(3)
    nodes = [RevocableNode(v, g.degree(v), 0, [s]) for v in range(3)]
    nodes[0].view, nodes[2].view = (4, 5), (4, 3)
    _lockstep_dissemination(g, nodes, 2)
    assert [node.view for node in nodes] == [(4, 3)] * 3


def test_high_degree_node_raises_alarm():
    star = graphs.load_edge_list("".join(f"0 {i}\n" for i in range(1, 7)))
    out = revocable.run_revocable(star, k_values=[2], r_scale=Fraction(1, 100), f_scale=Fraction(1, 20), seed=1)
    snap = out.final
    assert snap.alarms >= snap.f  # the centre (degree 6 > K = 4) alarms every iteration
    assert snap.probing_iterations == [0] * star.n


def test_all_black_potentials_stay_one():
    g = graphs.gen_cycle(5)
    s = schedule(4)
    nodes = [RevocableNode(v, 2, 0, [s]) for v in range(5)]
    for node in nodes:
        node.white, node.pot, node.scale, node.c = False, 1, 1, False
    for _ in range(10):
        payloads = [node._payload() for node in nodes]
        for v, node in enumerate(nodes):
            node._diffusion_receive({p: payloads[u] for p, (u, _) in enumerate(g.ports[v], start=1)})
    assert all(node.pot == node.scale for node in nodes)
    assert all(node.q == PROBING for node in nodes)


CASES = [
    (graphs.single_node(), [2, 4]),
    (graphs.gen_complete(2), [2, 4]),
    (graphs.gen_path(3), [2, 4]),
    (graphs.gen_cycle(4), [2, 4]),
    (graphs.gen_complete(4), [2, 4]),
    (graphs.load_edge_list("".join(f"0 {i}\n" for i in range(1, 6))), [2, 4]),
]


@pytest.mark.parametrize("arithmetic", ["exact", "fixed"])
@pytest.mark.parametrize("case", range(len(CASES)))
@pytest.mark.parametrize("seed", [0, 3])
def test_engine_and_fast_executors_agree(case, seed, arithmetic):
    g, ks = CASES[case]
    kw = dict(k_values=ks, i_G=1, r_scale=Fraction(1, 50), f_scale=Fraction(1, 8), seed=seed, arithmetic=arithmetic)
    a = revocable.run_revocable(g, executor="engine", **kw).to_dict()
    b = revocable.run_revocable(g, executor="fast", **kw).to_dict()
    a.pop("executor"), b.pop("executor")
    assert a == b


def test_engine_run_sends_on_every_link_every_round():
    g = graphs.gen_cycle(4)
    out = revocable.run_revocable(g, k_values=[2], r_scale=Fraction(1, 100), f_scale=Fraction(1, 10), executor="engine")
    snap = out.final
    assert snap.messages == (snap.r + snap.K) * snap.f * 2 * g.m
    # every diffusion round carries a serial potential; dissemination rounds carry none
    assert snap.serial_bits > 0
    assert 0 < snap.max_payload_bits <= snap.bit_budget


def test_single_node_elects_itself():
    out = revocable.run_revocable(graphs.single_node(), seed=2, r_scale=Fraction(1, 100), f_scale=Fraction(1, 4))
    assert out.final.leaders == [0] and out.success


def test_small_cycle_end_to_end():
    g = graphs.gen_cycle(8)
    out = revocable.run_revocable(g, i_G=isoperimetric_exact(g), r_scale=Fraction(1, 4000), f_scale=Fraction(1, 4), seed=4)
    assert out.success, out.flags


def test_outcome_serialisation_is_stable():
    g = graphs.gen_complete(4)
    kw = dict(k_values=[2, 4], r_scale=Fraction(1, 100), f_scale=Fraction(1, 8), seed=7)
    a, b = revocable.run_revocable(g, **kw), revocable.run_revocable(g, **kw)
    assert a.to_json() == b.to_json()
    rows = list(csv.DictReader(io.StringIO(a.to_csv())))
    assert [int(r["k"]) for r in rows] == [2, 4]
    assert tuple(rows[0]) == revocable.RevocableOutcome.CSV_COLUMNS


def test_unknown_executor_and_arithmetic():
    with pytest.raises(InvalidParameterError):
        revocable.run_revocable(graphs.gen_complete(2), k_values=[2], executor="gpu")
    with pytest.raises(InvalidParameterError):
        revocable.run_revocable(graphs.gen_complete(2), k_values=[2], arithmetic="float")
