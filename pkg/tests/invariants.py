"""Round-by-round invariant checks for the known-n election, via the engine observer."""
import random
from fractions import Fraction

from anonle import graphs
from anonle.known_n import KnownNParams, elect_known_n


class WalkInvariantObserver:
    """Checks token conservation and monotone per-node maxima after every executed round."""

    def __init__(self, params: KnownNParams):
        self.params = params
        self.walk_start = params.broadcast_rounds + 1
        self.cc_start = params.broadcast_rounds + params.walk_length + 1
        self.prev_max = None
        self.violations: list[str] = []
        self.rounds_checked = 0

    def __call__(self, r, automata, sent):
        expected = sum(a.running for a in automata) * self.params.x
        maxima = [a.walk.id_max_seen for a in automata]
        if self.prev_max is not None:
            for v, (before, now) in enumerate(zip(self.prev_max, maxima)):
                if now < before:
                    self.violations.append(f"round {r}: node {v} max fell {before} -> {now}")
        self.prev_max = maxima
        if self.walk_start <= r <= self.cc_start:
            resident = sum(a.walk.resident_walk_count for a in automata)
            flying = sum(p.values[1] for out in sent.values() for p in out.values() if p.kind == "walk")
            if resident + flying != expected:
                self.violations.append(f"round {r}: {resident}+{flying} tokens, expected {expected}")
            self.rounds_checked += 1


def random_instance(rng: random.Random):
    """A small connected graph plus deliberately loose parameters (the invariants must hold for any)."""
    n = rng.randint(2, 10)
    kind = rng.choice(["complete", "path", "cycle", "erdos-renyi", "tree"])
    if kind == "cycle" and n < 3:
        kind = "path"
    if kind == "erdos-renyi":
        g = graphs.gen_erdos_renyi(n, rng.uniform(0.3, 0.9), seed=rng.randrange(2**32))
    elif kind == "tree":
        edges = "".join(f"{rng.randrange(v)} {v}\n" for v in range(1, n))
        g = graphs.load_edge_list(edges)
    else:
        g = graphs.make_family(kind, n)
    params = KnownNParams(
        n_known=max(2, n + rng.randint(0, 3)),
        t_mix=rng.randint(1, 4),
        phi=Fraction(rng.randint(1, 8), 8),
        c=rng.randint(1, 3),
        x=rng.randint(1, 6),
        strict_pseudocode=rng.random() < 0.2,
    )
    return g, params


def check_instance(g, params, seed):
    obs = WalkInvariantObserver(params)
    out = elect_known_n(g, params, seed, observer=obs)
    if out.running_candidates:
        assert obs.rounds_checked > 0
    return obs.violations
