"""Irrevocable leader election when (an upper bound on) n is known.

Four phases run back to back inside the synchronous engine:

1. every node draws a random ID in ``{1..n^4}`` and becomes a candidate with
   probability ``c ln n / n``;
2. each candidate grows a bounded territory by *cautious broadcast*; the
   concurrent broadcasts are multiplexed into super-rounds of
   ``4 c ceil(log2 n)`` rounds, one slot per broadcast at each node;
3. each candidate releases ``x`` lazy random walks carrying its ID; IDs merge
   by max wherever walks meet;
4. every territory convergecasts the largest walk ID seen to its candidate.

A candidate whose own ID survives the convergecast is the leader.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from . import engine
from .engine import ON_MESSAGE, Field, Kind, LinkPayload, MessageSchema, RunConfig, Step, ceil_log2
from .errors import InvalidParameterError
from .graphs import PortGraph

ACTIVE, PASSIVE, STOP = "active", "passive", "stop"
BROADCAST_KINDS = ("offer", "size", "activate", "deactivate", "stop")


def _ceil_sqrt(q: Fraction) -> int:
    """Exact ``ceil(sqrt(q))`` for a non-negative rational."""
    a, b = q.numerator, q.denominator
    x = math.isqrt(a * b) // b
    while x * x * b < a:
        x += 1
    while x > 0 and (x - 1) * (x - 1) * b >= a:
        x -= 1
    return x


def choose_x(n: int, phi, t_mix: int, x_multiplier=1) -> int:
    """``ceil(mult * sqrt(n * ceil(log2 n) / (phi * t_mix)))``, computed exactly."""
    if n < 1 or t_mix < 1 or phi <= 0 or x_multiplier <= 0:
        raise InvalidParameterError("choose_x needs positive inputs")
    arg = Fraction(x_multiplier) ** 2 * Fraction(n * max(1, ceil_log2(n))) / (Fraction(phi) * t_mix)
    return max(1, _ceil_sqrt(arg))


@dataclass(frozen=True)
class KnownNParams:
    n_known: int
    t_mix: int
    phi: Fraction
    c: int = 4
    x: int = 0  # 0: derive with choose_x
    x_multiplier: Fraction = Fraction(1)
    strict_pseudocode: bool = False
    informed_slack: int = 4

    def __post_init__(self):
        if self.n_known < 1:
            raise InvalidParameterError("n_known must be positive")
        if self.c < 1:
            raise InvalidParameterError("c must be a positive integer")
        object.__setattr__(self, "phi", Fraction(self.phi))
        object.__setattr__(self, "x_multiplier", Fraction(self.x_multiplier))
        if self.n_known > 1:
            if self.t_mix < 1 or self.phi <= 0:
                raise InvalidParameterError("t_mix and phi must be positive")
            if self.x == 0:
                object.__setattr__(self, "x", choose_x(self.n_known, self.phi, self.t_mix, self.x_multiplier))
            if self.x < 1:
                raise InvalidParameterError("x must be >= 1")

    @property
    def log_n(self) -> int:
        return max(1, ceil_log2(self.n_known))

    @property
    def id_space_max(self) -> int:
        return self.n_known**4

    @property
    def candidate_prob(self) -> float:
        if self.n_known == 1:
            return 1.0
        return min(1.0, self.c * math.log(self.n_known) / self.n_known)

    @property
    def superround_width(self) -> int:
        return 4 * self.c * self.log_n

    @property
    def walk_length(self) -> int:
        return self.c * self.t_mix * self.log_n

    @property
    def territory_cap(self) -> int:
        return max(1, math.ceil(self.x * self.t_mix * self.phi))

    @property
    def broadcast_rounds(self) -> int:
        return self.superround_width * self.walk_length

    @property
    def total_rounds(self) -> int:
        return self.broadcast_rounds + 2 * self.walk_length + 1

    def to_dict(self) -> dict:
        return {
            "n_known": self.n_known,
            "t_mix": self.t_mix,
            "phi": str(self.phi),
            "c": self.c,
            "x": self.x,
            "x_multiplier": str(self.x_multiplier),
            "strict_pseudocode": self.strict_pseudocode,
            "candidate_prob": self.candidate_prob,
            "superround_width": self.superround_width,
            "walk_length": self.walk_length,
            "territory_cap": self.territory_cap if self.n_known > 1 else 1,
        }


@dataclass(frozen=True)
class Role:
    id: int
    candidate: bool


def sample_role(rng, params: KnownNParams) -> Role:
    """ID uniform on ``{1..n_known^4}``, then the candidate coin, from one stream."""
    node_id = rng.randint(1, params.id_space_max)
    return Role(node_id, rng.random() < params.candidate_prob)


def make_schema(params: KnownNParams, n_actual: int) -> MessageSchema:
    scale = max(params.n_known, n_actual)
    id_bits = ceil_log2(params.id_space_max)
    max_id_bits = params.id_space_max.bit_length()
    size_bits = scale.bit_length()
    count_bits = max(1, (params.superround_width * max(1, params.x)).bit_length())
    tid = Field("thread", id_bits, offset=1)
    return MessageSchema([
        Kind("offer", "broadcast", (tid,)),
        Kind("size", "broadcast", (tid, Field("size", size_bits))),
        Kind("activate", "broadcast", (tid,)),
        Kind("deactivate", "broadcast", (tid,)),
        Kind("stop", "broadcast", (tid,)),
        Kind("walk", "walk", (Field("id", max_id_bits), Field("count", count_bits))),
        Kind("cc", "convergecast", (Field("id", max_id_bits),)),
    ])


class ThreadState:
    """One node's view of one cautious broadcast (one candidate thread)."""

    __slots__ = ("tid", "source", "parent", "children", "size", "cstatus", "status",
                 "threshold", "avail", "last_reported", "frozen", "dirty")

    def __init__(self, tid: int, degree: int, source: bool):
        self.tid = tid
        self.source = source
        self.parent: int | None = None
        self.children: set[int] = set()
        self.size: dict[int, int] = {}
        self.cstatus: dict[int, str] = {}
        self.status = ACTIVE if source else PASSIVE
        self.threshold = 1
        self.avail: set[int] = set(range(1, degree + 1))
        self.last_reported: int | None = None
        self.frozen = False
        self.dirty = True

    @property
    def subtree(self) -> int:
        return 1 + sum(self.size[c] for c in self.children)

    @property
    def informed(self) -> bool:
        return self.source or self.parent is not None


def process_receptions(st: ThreadState, msgs: list[tuple[int, LinkPayload]]) -> None:
    for port, msg in msgs:
        kind = msg.kind
        if kind == "stop":
            st.status = STOP
        elif kind == "size":
            st.size[port] = msg.values[1]
            st.cstatus[port] = ACTIVE
            st.children.add(port)
            st.avail.discard(port)
        elif kind == "offer":
            st.avail.discard(port)
            if not st.source and st.parent is None:
                st.parent = port
                st.status = ACTIVE
                st.cstatus[port] = ACTIVE
        elif kind == "activate":
            if port == st.parent:
                st.status = ACTIVE
        elif kind == "deactivate":
            if port == st.parent:
                st.status = PASSIVE


def prepare_transmissions(st: ThreadState, rng, cap: int) -> dict[int, LinkPayload]:
    out: dict[int, LinkPayload] = {}
    tid = st.tid
    subtree = st.subtree
    if st.status != STOP and subtree >= cap:
        st.status = STOP
    if st.status == STOP:
        for ch in st.children:
            out[ch] = LinkPayload("stop", tid)
            st.cstatus[ch] = STOP
        if not st.source and st.parent is not None:
            out[st.parent] = LinkPayload("stop", tid)
            st.cstatus[st.parent] = STOP
        st.frozen = True
        return out
    if not st.source and subtree != st.last_reported:
        out[st.parent] = LinkPayload("size", tid, subtree)
        st.last_reported = subtree
    if subtree < st.threshold and (st.source or st.status == ACTIVE):
        for ch in st.children:
            if st.cstatus.get(ch) != ACTIVE:
                out[ch] = LinkPayload("activate", tid)
                st.cstatus[ch] = ACTIVE
        if st.avail:
            port = rng.choice(sorted(st.avail))
            st.avail.discard(port)
            out[port] = LinkPayload("offer", tid)
    else:
        if subtree >= st.threshold:
            st.threshold *= 2
            st.dirty = True
        for ch in st.children:
            if st.cstatus.get(ch) != PASSIVE:
                out[ch] = LinkPayload("deactivate", tid)
                st.cstatus[ch] = PASSIVE
    return out


def cautious_broadcast_round(st: ThreadState, inbox: list[tuple[int, LinkPayload]], rng, cap: int) -> dict[int, LinkPayload]:
    """One thread-round: fold receptions, then prepare this round's transmissions.

    Receptions are processed in the given order, so with simultaneous offers
    the caller lists them by port and the lowest port becomes the parent.
    """
    process_receptions(st, inbox)
    return prepare_transmissions(st, rng, cap)


@dataclass
class WalkState:
    id_max_seen: int = 0
    resident_walk_count: int = 0


def random_walk_round(st: WalkState, inbox: dict[int, LinkPayload], rng, degree: int) -> dict[int, LinkPayload]:
    """Fold incoming ``(id, count)`` pairs, then move each resident walk lazily."""
    top = st.id_max_seen
    resident = st.resident_walk_count
    for msg in inbox.values():
        wid, count = msg.values
        if wid > top:
            top = wid
        resident += count
    st.id_max_seen = top
    # tokens are indistinguishable: the number that move is Binomial(count, 1/2)
    movers = bin(rng.getrandbits(resident)).count("1") if resident else 0
    st.resident_walk_count = resident - movers
    if not movers:
        return {}
    counts = [0] * (degree + 1)
    rnd = rng.random
    for _ in range(movers):
        counts[int(rnd() * degree) + 1] += 1
    return {p: LinkPayload("walk", top, c) for p, c in enumerate(counts) if c}


def inject_walks(st: WalkState, x: int, rng, degree: int) -> dict[int, LinkPayload]:
    """Place ``x`` fresh walks on uniformly random ports (no lazy step)."""
    counts: dict[int, int] = {}
    for _ in range(x):
        p = rng.randrange(degree) + 1
        counts[p] = counts.get(p, 0) + 1
    return {p: LinkPayload("walk", st.id_max_seen, c) for p, c in counts.items()}


def convergecast_round(st: WalkState, inbox: dict[int, LinkPayload], parents: set[int],
                       last_sent: dict[int, int]) -> dict[int, LinkPayload]:
    """Max-fold incoming IDs; forward the current maximum to every parent port.

    A value already delivered on a port is not resent; the fold is idempotent
    so the outcome equals resending every round. The sentinel 0 is never sent.
    """
    for msg in inbox.values():
        if msg.kind in ("cc", "walk"):
            if msg.values[0] > st.id_max_seen:
                st.id_max_seen = msg.values[0]
    out = {}
    if st.id_max_seen:
        for p in parents:
            if last_sent.get(p) != st.id_max_seen:
                out[p] = LinkPayload("cc", st.id_max_seen)
                last_sent[p] = st.id_max_seen
    return out


class KnownNNode:
    """Per-node automaton for the known-n election."""

    def __init__(self, degree: int, role: Role, running: bool, params: KnownNParams, streams):
        self.degree = degree
        self.role = role
        self.running = running  # candidate whose broadcast thread is scheduled
        self.params = params
        self.W = params.superround_width
        self.T = params.walk_length
        self.cap = params.territory_cap
        self.b_end = params.broadcast_rounds
        self.walk_start = self.b_end + 1
        self.cc_start = self.b_end + self.T + 1
        self.final = params.total_rounds
        self.rng_bc = streams("broadcast")
        self.rng_walk = streams("walk")
        self.threads: dict[int, ThreadState] = {}
        self.slot_of: dict[int, int] = {}
        self.slots: list[int] = []
        self.buffer: dict[int, list[tuple[int, int, LinkPayload]]] = {}
        self.overflow = 0
        start = role.id if (running or params.strict_pseudocode) else 0
        self.walk = WalkState(id_max_seen=start)
        self.walk_max: int | None = None
        self.last_sent: dict[int, int] = {}
        self.leader = False
        if running:
            self._join(role.id, source=True)

    # -- broadcast multiplexing -------------------------------------------------
    def _join(self, tid: int, source: bool = False) -> bool:
        if len(self.slots) >= self.W:
            self.overflow += 1
            return False
        self.slot_of[tid] = len(self.slots)
        self.slots.append(tid)
        self.threads[tid] = ThreadState(tid, self.degree, source)
        return True

    def _next_slot_round(self, tid: int, after: int) -> int:
        s = self.slot_of[tid]
        base = (after // self.W) * self.W  # rounds are 1-based: round r has slot (r-1) % W
        r = base + s + 1
        if r <= after:
            r += self.W
        return r

    def _broadcast_step(self, r: int, inbox: dict[int, LinkPayload]) -> dict[int, LinkPayload]:
        new = sorted({m.values[0] for m in inbox.values() if m.kind == "offer" and m.values[0] not in self.threads})
        for tid in new:
            self._join(tid)
        for port, msg in inbox.items():
            tid = msg.values[0]
            if tid in self.threads and not self.threads[tid].frozen:
                self.buffer.setdefault(tid, []).append((r, port, msg))
        slot = (r - 1) % self.W
        out: dict[int, LinkPayload] = {}
        if slot < len(self.slots):
            tid = self.slots[slot]
            st = self.threads[tid]
            if not st.frozen:
                msgs = sorted(self.buffer.pop(tid, []), key=lambda e: (e[0], e[1]))
                before = (st.status, st.threshold, st.parent)
                st.dirty = False
                out = cautious_broadcast_round(st, [(p, m) for _, p, m in msgs], self.rng_bc, self.cap)
                st.dirty = bool(out) or st.dirty or before != (st.status, st.threshold, st.parent)
        return out

    def _broadcast_wake(self, r: int) -> int | None:
        best = None
        for tid, st in self.threads.items():
            if st.frozen:
                continue
            if st.dirty or self.buffer.get(tid):
                nr = self._next_slot_round(tid, r)
                if best is None or nr < best:
                    best = nr
        if best is not None and best > self.b_end:
            return None
        return best

    # -- automaton contract -----------------------------------------------------
    def step(self, r: int, inbox: dict[int, LinkPayload]) -> Step:
        if r <= self.b_end:
            out = self._broadcast_step(r, inbox)
            wake = self._broadcast_wake(r)
            if wake is None:
                wake = self.walk_start if self.running else self.final
            return Step(out, wake=wake)
        if r < self.cc_start:
            j = r - self.b_end
            if j == 1:
                inbox = {}
                out = inject_walks(self.walk, self.params.x, self.rng_walk, self.degree) if self.running else {}
            else:
                out = random_walk_round(self.walk, inbox, self.rng_walk, self.degree)
            return Step(out, wake=r + 1 if self.walk.resident_walk_count else self.final)
        # convergecast window
        if self.walk_max is None:
            for msg in inbox.values():
                if msg.kind == "walk":
                    self.walk.resident_walk_count += msg.values[1]
                    self.walk.id_max_seen = max(self.walk.id_max_seen, msg.values[0])
            self.walk_max = self.walk.id_max_seen
        if r < self.final:
            out = convergecast_round(self.walk, inbox, self.parent_ports(), self.last_sent)
            return Step(out, wake=self.final)
        convergecast_round(self.walk, inbox, set(), self.last_sent)
        if self.params.strict_pseudocode:
            self.leader = self.role.id == self.walk.id_max_seen
        else:
            self.leader = self.running and self.role.id == self.walk.id_max_seen
        return Step(None, halted=True)

    def parent_ports(self) -> set[int]:
        return {st.parent for st in self.threads.values() if not st.source and st.parent is not None}

    def observe(self) -> dict:
        if self.walk_max is None:
            self.walk_max = self.walk.id_max_seen
        return {
            "id": self.role.id,
            "candidate": self.role.candidate,
            "running": self.running,
            "leader": self.leader,
            "id_max": self.walk.id_max_seen,
            "walk_max": self.walk_max,
            "resident_walks": self.walk.resident_walk_count,
            "overflow": self.overflow,
            "threads": {
                tid: {
                    "source": st.source,
                    "parent": st.parent,
                    "children": sorted(st.children),
                    "subtree": st.subtree,
                    "status": st.status,
                    "threshold": st.threshold,
                }
                for tid, st in self.threads.items()
                if st.informed
            },
        }


@dataclass
class ElectionOutcome:
    leaders: list[int]
    candidates: int
    running_candidates: int
    phases: dict[str, dict[str, int]]
    flags: list[str]
    params: dict
    rounds: int
    messages: int
    bits: int
    max_payload_bits: int
    bit_budget: int
    territory_sizes: dict[int, int] = field(default_factory=dict)
    source_subtrees: dict[int, int] = field(default_factory=dict)
    walk_hits: dict[int, bool] = field(default_factory=dict)
    observables: list[dict] = field(default_factory=list, repr=False)
    metrics: Any = field(default=None, repr=False)

    @property
    def exactly_one_leader(self) -> bool:
        return len(self.leaders) == 1

    def to_dict(self) -> dict:
        return {
            "leaders": self.leaders,
            "candidates": self.candidates,
            "running_candidates": self.running_candidates,
            "phases": self.phases,
            "flags": self.flags,
            "params": self.params,
            "rounds": self.rounds,
            "messages": self.messages,
            "bits": self.bits,
            "max_payload_bits": self.max_payload_bits,
            "bit_budget": self.bit_budget,
            "territory_sizes": {str(k): v for k, v in sorted(self.territory_sizes.items())},
            "source_subtrees": {str(k): v for k, v in sorted(self.source_subtrees.items())},
            "walk_hits": {str(k): v for k, v in sorted(self.walk_hits.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def elect_known_n(graph: PortGraph, params: KnownNParams, seed: int, *, roles: list[Role] | None = None,
                  observer=None, trace_level: int = 0) -> ElectionOutcome:
    """Run the four-phase election on ``graph`` with master seed ``seed``.

    ``roles`` overrides the sampled roles (for rigged-collision tests).
    """
    n = graph.n
    if roles is None:
        roles = [sample_role(engine.rng_stream(seed, v, "role"), params) for v in range(n)]
    candidates = sorted((r.id, v) for v, r in enumerate(roles) if r.candidate)
    flags: list[str] = []
    if params.n_known == 1:
        return ElectionOutcome(
            leaders=list(range(n)), candidates=n, running_candidates=n, phases={}, flags=["degenerate-n1"],
            params=params.to_dict(), rounds=0, messages=0, bits=0, max_payload_bits=0, bit_budget=0,
        )
    W = params.superround_width
    if not candidates:
        flags.append("no-candidate")
    if len(candidates) > W:
        flags.append("multiplex-overflow")
    running = {v for _, v in candidates[:W]}
    run_ids = [i for i, v in candidates[:W]]
    if len(set(run_ids)) != len(run_ids):
        flags.append("duplicate-id")

    budget = engine.default_bit_budget(params.n_known, n)
    schema = make_schema(params, n)

    def factory(v: int, degree: int) -> KnownNNode:
        return KnownNNode(degree, roles[v], v in running, params, lambda label: engine.rng_stream(seed, v, label))

    config = RunConfig(master_seed=seed, bit_budget_B=budget, max_rounds=params.total_rounds, trace_level=trace_level)
    result = engine.run(graph, factory, config, schema, observer=observer)
    obs = result.observables
    m = result.metrics
    leaders = [v for v, o in enumerate(obs) if o["leader"]]
    if not leaders:
        flags.append("no-leader")
    elif len(leaders) > 1:
        flags.append("multiple-leaders")
    if any(o["overflow"] for o in obs) and "multiplex-overflow" not in flags:
        flags.append("multiplex-overflow")
    territory_sizes: dict[int, int] = {}
    for o in obs:
        for tid in o["threads"]:
            territory_sizes[tid] = territory_sizes.get(tid, 0) + 1
    source_subtrees = {}
    for v in running:
        info = obs[v]["threads"].get(roles[v].id)
        if info is not None:
            source_subtrees[roles[v].id] = info["subtree"]
    walk_hits = {}
    if run_ids:
        top = max(run_ids)
        for tid in run_ids:
            walk_hits[tid] = any(o["walk_max"] == top and tid in o["threads"] for o in obs)
    p = params
    phase_rounds = {"broadcast": p.broadcast_rounds, "walk": p.walk_length, "convergecast": p.walk_length + 1}
    phases = {}
    for name, rounds in phase_rounds.items():
        tally = m.per_phase.get(name)
        phases[name] = {
            "rounds": rounds,
            "messages": tally.messages if tally else 0,
            "bits": tally.bits if tally else 0,
        }
    flags.extend(f for f in m.flags if f not in ("timeout",))
    return ElectionOutcome(
        leaders=leaders,
        candidates=len(candidates),
        running_candidates=len(running),
        phases=phases,
        flags=flags,
        params=params.to_dict(),
        rounds=m.rounds_executed,
        messages=m.messages_sent,
        bits=m.bits_sent,
        max_payload_bits=m.max_payload_bits,
        bit_budget=budget,
        territory_sizes=territory_sizes,
        source_subtrees=source_subtrees,
        walk_hits=walk_hits,
        observables=obs,
        metrics=m,
    )


def params_for_graph(graph: PortGraph, c: int = 4, x_multiplier=1, n_known: int | None = None,
                     strict_pseudocode: bool = False) -> KnownNParams:
    """Parameters from the graph's own metrics (exact where affordable)."""
    from .metrics import compute_metrics

    if graph.n == 1:
        return KnownNParams(n_known=n_known or 1, t_mix=1, phi=Fraction(1), c=c)
    gm = compute_metrics(graph)
    return KnownNParams(
        n_known=n_known or graph.n,
        t_mix=gm.t_mix,
        phi=Fraction(gm.conductance).limit_denominator(10**9) if isinstance(gm.conductance, float) else gm.conductance,
        c=c,
        x_multiplier=Fraction(x_multiplier),
        strict_pseudocode=strict_pseudocode,
    )
