"""Deterministic synchronous round executor with CONGEST accounting.

Each round every stepped automaton reads the payloads delivered to it
(sent in the previous round) and produces an outbox keyed by port. Outboxes
are delivered all at once, so a payload sent in round ``r`` is only readable
in round ``r + 1``.

To keep sparse protocols cheap, an automaton that has nothing to do can
return ``wake=ON_MESSAGE`` (or a future round number); the engine then skips
it until a payload arrives or the requested round comes. Rounds in which no
automaton is stepped are skipped entirely but still count as elapsed.

Bit widths are computed by the engine from a :class:`MessageSchema`, never
taken from the producer.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

from .errors import BitBudgetViolation, EncodingError, InvalidParameterError
from .graphs import PortGraph

ON_MESSAGE = -1


def rng_stream(master_seed: int, node: int, phase: str) -> random.Random:
    """Independent reproducible stream for ``(master_seed, node, phase)``.

    The triple is hashed with BLAKE2b (unambiguous ``|``-separated text) and
    the 128-bit digest seeds a Mersenne Twister.
    """
    key = f"{int(master_seed)}|{int(node)}|{phase}".encode()
    return random.Random(int.from_bytes(hashlib.blake2b(key, digest_size=16).digest(), "big"))


def ceil_log2(x: int) -> int:
    return max(0, (int(x) - 1).bit_length())


def default_bit_budget(*scales: int) -> int:
    """``8 * ceil(log2(max scale)) + 8`` bits per link, direction and round."""
    return 8 * max(1, ceil_log2(max(2, *scales))) + 8


@dataclass(frozen=True)
class Field:
    """A fixed-width unsigned field; values are encoded as ``value - offset``.

    ``optional`` fields spend one presence bit and accept ``None``. A field
    with ``width_fn`` has a payload-dependent width; ``width_fn(payload)``
    validates the value and returns the width. With ``serial=True`` the field
    is transferred bit by bit over several rounds, so it is excluded from the
    per-round budget but still counted (``serial_bits``).
    """

    name: str
    width: int = 0
    offset: int = 0
    optional: bool = False
    serial: bool = False
    width_fn: Callable[["LinkPayload"], int] | None = None


@dataclass(frozen=True)
class Kind:
    name: str
    phase: str
    fields: tuple[Field, ...] = ()


class LinkPayload:
    __slots__ = ("kind", "values")

    def __init__(self, kind: str, *values: Any):
        self.kind = kind
        self.values = values

    def __eq__(self, other):
        return isinstance(other, LinkPayload) and self.kind == other.kind and self.values == other.values

    def __hash__(self):
        return hash((self.kind, self.values))

    def __repr__(self):
        return f"LinkPayload({self.kind!r}, {', '.join(map(repr, self.values))})"


class MessageSchema:
    """Documented encoding: a kind tag followed by the kind's fields in order."""

    def __init__(self, kinds: Iterable[Kind]):
        self.kinds = {k.name: k for k in kinds}
        self.tag_bits = max(1, ceil_log2(len(self.kinds)))
        self._fixed = {}
        self._plain = {}
        for k in self.kinds.values():
            fixed = self.tag_bits
            for f in k.fields:
                if not f.serial:
                    fixed += f.width + (1 if f.optional else 0)
            self._fixed[k.name] = fixed
            if not any(f.serial or f.optional or f.width_fn for f in k.fields):
                self._plain[k.name] = tuple((f.offset, f.width) for f in k.fields)

    def phase(self, kind: str) -> str:
        return self.kinds[kind].phase

    def encode_bits(self, payload: LinkPayload) -> tuple[int, int]:
        """Return ``(budgeted_bits, serial_bits)``, validating every field."""
        plain = self._plain.get(payload.kind)
        if plain is not None and len(plain) == len(payload.values):
            try:
                for (offset, width), value in zip(plain, payload.values):
                    enc = value - offset
                    if enc < 0 or enc >> width:
                        break
                else:
                    return self._fixed[payload.kind], 0
            except TypeError:
                pass
        return self._encode_slow(payload)

    def _encode_slow(self, payload: LinkPayload) -> tuple[int, int]:
        try:
            kind = self.kinds[payload.kind]
        except KeyError:
            raise EncodingError(f"unknown payload kind {payload.kind!r}") from None
        if len(payload.values) != len(kind.fields):
            raise EncodingError(f"{payload.kind}: expected {len(kind.fields)} fields, got {len(payload.values)}")
        serial = 0
        budgeted = self._fixed[payload.kind]
        for f, value in zip(kind.fields, payload.values):
            if f.serial:
                serial += f.width_fn(payload)
                continue
            if f.width_fn is not None:
                budgeted += f.width_fn(payload)
                continue
            if value is None:
                if not f.optional:
                    raise EncodingError(f"{payload.kind}.{f.name} is not optional")
                continue
            if not isinstance(value, int):
                raise EncodingError(f"{payload.kind}.{f.name}={value!r} is not an integer")
            enc = value - f.offset
            if enc < 0 or enc >> f.width:
                raise EncodingError(f"{payload.kind}.{f.name}={value} does not fit {f.width} bits (offset {f.offset})")
        return budgeted, serial


@dataclass
class Step:
    outbox: dict[int, LinkPayload] | None = None
    halted: bool = False
    wake: int | None = None  # None: next round; ON_MESSAGE: only when a payload arrives
    surcharge: int = 0  # extra accounted rounds this round (bit-serial transfers)


class NodeAutomaton(Protocol):
    def step(self, round_index: int, inbox: dict[int, LinkPayload]) -> Step: ...

    def observe(self) -> dict: ...


@dataclass
class RunConfig:
    master_seed: int = 0
    bit_budget_B: int = 64
    max_rounds: int = 10**6
    trace_level: int = 0
    budget_for_round: Callable[[int], int] | None = None
    on_violation: str = "raise"  # or "log"

    def __post_init__(self):
        if self.bit_budget_B < 1:
            raise InvalidParameterError("bit_budget_B must be >= 1")
        if self.max_rounds < 1:
            raise InvalidParameterError("max_rounds must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise InvalidParameterError("master_seed must be a 64-bit unsigned integer")
        if self.on_violation not in ("raise", "log"):
            raise InvalidParameterError("on_violation must be 'raise' or 'log'")


@dataclass
class PhaseTally:
    messages: int = 0
    bits: int = 0
    serial_bits: int = 0


@dataclass
class RunMetrics:
    rounds_executed: int = 0
    rounds_accounted: int = 0
    messages_sent: int = 0
    bits_sent: int = 0
    serial_bits_sent: int = 0
    max_payload_bits: int = 0
    per_phase: dict[str, PhaseTally] = field(default_factory=dict)
    whites_count: list[int] = field(default_factory=list)
    outcome: dict = field(default_factory=dict)
    violations: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rounds_executed": self.rounds_executed,
            "rounds_accounted": self.rounds_accounted,
            "messages_sent": self.messages_sent,
            "bits_sent": self.bits_sent,
            "serial_bits_sent": self.serial_bits_sent,
            "max_payload_bits": self.max_payload_bits,
            "per_phase": {k: vars(v) for k, v in sorted(self.per_phase.items())},
            "whites_count": self.whites_count,
            "outcome": self.outcome,
            "violations": self.violations,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=str)


@dataclass
class RunResult:
    metrics: RunMetrics
    automata: list
    observables: list[dict]
    trace: list[dict]

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.trace)


Observer = Callable[[int, list, dict[int, dict[int, LinkPayload]]], None]


def run(
    graph: PortGraph,
    factory: Callable[[int, int], NodeAutomaton],
    config: RunConfig,
    schema: MessageSchema,
    observer: Observer | None = None,
) -> RunResult:
    """Execute automata in lockstep until all halt or ``max_rounds`` elapse.

    ``factory(node_index, degree)`` builds one automaton per node; the index
    is meant for seeding per-node streams only. ``observer(round, automata,
    sent)`` is called after every executed round with the payloads sent in it
    (keyed by sender then port).
    """
    n = graph.n
    ports = graph.ports
    automata = [factory(v, len(ports[v])) for v in range(n)]
    metrics = RunMetrics()
    trace: list[dict] = []
    halted = [False] * n
    n_halted = 0
    wakes: dict[int, set[int]] = {1: set(range(n))}
    wake_heap = [1]
    inboxes: dict[int, dict[int, LinkPayload]] = {}
    budget_fn = config.budget_for_round
    encode = schema.encode_bits
    tallies: dict[str, list[int]] = {}  # kind -> [messages, bits, serial bits]
    max_bits = 0
    r = 1
    last = 0
    surcharges = 0
    while r <= config.max_rounds:
        active = wakes.pop(r, set())
        if inboxes:
            active.update(inboxes)
        budget = budget_fn(r) if budget_fn else config.bit_budget_B
        sent: dict[int, dict[int, LinkPayload]] = {}
        deliveries: dict[int, dict[int, LinkPayload]] = {}
        round_surcharge = 0
        for v in sorted(active):
            if halted[v]:
                continue
            res = automata[v].step(r, inboxes.get(v, {}))
            out = res.outbox
            if out:
                sent[v] = out
                pv = ports[v]
                for p, payload in out.items():
                    bits, serial = encode(payload)
                    if bits > budget:
                        record = {"round": r, "node": v, "port": p, "kind": payload.kind, "bits": bits, "budget": budget}
                        metrics.violations.append(record)
                        if config.on_violation == "raise":
                            raise BitBudgetViolation(r, v, p, payload.kind, bits, budget)
                    u, q = pv[p - 1]
                    box = deliveries.get(u)
                    if box is None:
                        deliveries[u] = {q: payload}
                    else:
                        box[q] = payload
                    kind_tally = tallies.get(payload.kind)
                    if kind_tally is None:
                        kind_tally = tallies[payload.kind] = [0, 0, 0]
                    kind_tally[0] += 1
                    kind_tally[1] += bits
                    kind_tally[2] += serial
                    if bits > max_bits:
                        max_bits = bits
                    if config.trace_level:
                        trace.append({"round": r, "node": v, "port": p, "kind": payload.kind, "bits": bits, "serial_bits": serial})
            if res.surcharge > round_surcharge:
                round_surcharge = res.surcharge
            if res.halted:
                halted[v] = True
                n_halted += 1
                continue
            nxt = r + 1 if res.wake is None else res.wake
            if nxt != ON_MESSAGE:
                if nxt <= r:
                    raise InvalidParameterError(f"automaton requested wake round {nxt} in round {r}")
                bucket = wakes.get(nxt)
                if bucket is None:
                    wakes[nxt] = {v}
                    heapq.heappush(wake_heap, nxt)
                else:
                    bucket.add(v)
        surcharges += round_surcharge
        last = r
        if observer is not None:
            observer(r, automata, sent)
        if n_halted == n:
            break
        inboxes = {u: box for u, box in deliveries.items() if not halted[u]}
        if inboxes:
            r += 1
            continue
        while wake_heap and wake_heap[0] <= r:
            heapq.heappop(wake_heap)
        if not wake_heap:
            metrics.flags.append("quiescent")
            break
        r = wake_heap[0]
    if n_halted < n and r > config.max_rounds:
        metrics.flags.append("timeout")
        last = config.max_rounds
    for kind, (msgs, bits, serial) in sorted(tallies.items()):
        tally = metrics.per_phase.setdefault(schema.phase(kind), PhaseTally())
        tally.messages += msgs
        tally.bits += bits
        tally.serial_bits += serial
        metrics.messages_sent += msgs
        metrics.bits_sent += bits
        metrics.serial_bits_sent += serial
    metrics.max_payload_bits = max_bits
    metrics.rounds_executed = last
    metrics.rounds_accounted = last + surcharges
    observables = [a.observe() for a in automata]
    return RunResult(metrics, automata, observables, trace)


def check_metric_invariants(metrics: RunMetrics, m: int, budget: int) -> None:
    """Counting invariants every run must satisfy."""
    assert metrics.messages_sent <= metrics.rounds_executed * 2 * m
    assert metrics.bits_sent <= metrics.messages_sent * budget
    assert sum(t.messages for t in metrics.per_phase.values()) == metrics.messages_sent
