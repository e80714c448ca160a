"""Revocable leader election without any knowledge of the network.

Nodes walk through size estimates ``k = 2, 4, 8, ...``. For each estimate
they run ``f(k)`` certification iterations; an iteration samples white/black
colours, diffuses potentials (white 0, black 1) for ``r(k)`` rounds with
degree/neighbour alarms and a final threshold ``tau(k)``, then floods the
outcome for ``K = k^(1+eps)`` rounds. A node that saw no white node in more
than half of the iterations, and had at least one iteration end in probing,
draws an ID; ``(K, id)`` is its certificate. Leader views fold by larger
``K`` first, then smaller ID.

Two interchangeable executors are provided:

* ``engine`` runs one :class:`RevocableNode` automaton per node inside the
  synchronous engine;
* ``fast`` computes the same outcome directly: diffusion through an exact
  integer matrix power (or explicit stepping when alarms or fixed-point
  arithmetic are involved) and flooding through hop distances.

Both consume the per-node random streams in the same order, so they agree
exactly on every recorded quantity.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from . import diffusion, engine
from .engine import Field, Kind, LinkPayload, MessageSchema, RunConfig, Step, ceil_log2
from .errors import BitBudgetViolation, EncodingError, InvalidParameterError
from .graphs import PortGraph

F_CONSTANT = 4 * math.sqrt(2) / (math.sqrt(2) - 1) ** 2
PROBING, LOW = "probing", "low"
ARITHMETIC = ("exact", "fixed")


def _log2_power_of_two(k: int) -> int:
    if k < 2 or k & (k - 1):
        raise InvalidParameterError(f"k must be a power of two >= 2, got {k}")
    return k.bit_length() - 1


def _pow2(exponent: Fraction):
    """``2^exponent``: an int when the exponent is integral, else a float."""
    if exponent.denominator == 1:
        return 1 << int(exponent)
    return 2.0 ** float(exponent)


def _ceil(x) -> int:
    if isinstance(x, (int, Fraction)):
        return math.ceil(x)
    return math.ceil(x - 1e-12 * max(1.0, abs(x)))


def estimate_power(k: int, epsilon) -> int:
    """``K = ceil(k^(1+eps))``, exact whenever the exponent is integral."""
    a = _log2_power_of_two(k)
    return _ceil(_pow2(a * (1 + Fraction(epsilon))))


@dataclass(frozen=True)
class ScheduleParams:
    k: int
    epsilon: Fraction
    xi: float
    i_G: Fraction | None
    K: int
    r: int
    p: float
    tau: Fraction
    f: int
    id_range_max: int
    r_formula: int
    f_formula: int
    r_scale: Fraction = Fraction(1)
    f_scale: Fraction = Fraction(1)

    @property
    def share(self) -> Fraction:
        return Fraction(1, 2 * self.K)

    @property
    def D(self) -> int:
        return 2 * self.K

    @property
    def potential_bits_per_step(self) -> int:
        return ceil_log2(2 * self.K)

    @property
    def scaled(self) -> bool:
        return self.r_scale != 1 or self.f_scale != 1

    @property
    def rounds_per_iteration(self) -> int:
        return self.r + self.K

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "epsilon": str(self.epsilon),
            "xi": self.xi,
            "i_G": None if self.i_G is None else str(self.i_G),
            "K": self.K,
            "r": self.r,
            "p": self.p,
            "tau": str(self.tau),
            "f": self.f,
            "id_range_max": self.id_range_max,
            "r_formula": self.r_formula,
            "f_formula": self.f_formula,
            "r_scale": str(self.r_scale),
            "f_scale": str(self.f_scale),
        }


def schedule(k: int, epsilon=1, xi: float = 0.1, i_G=None, r_scale=1, f_scale=1) -> ScheduleParams:
    """All per-estimate schedule quantities; logarithms are base 2 except in ``f``.

    With ``i_G`` unknown the diffusion length uses the graph-free variant
    ``2 k^(2(2+eps)) log2(k^(2(1+eps))) + K log2(2k)``.
    """
    a = _log2_power_of_two(k)
    eps = Fraction(epsilon)
    if not 0 < eps <= 1:
        raise InvalidParameterError(f"epsilon must be in (0, 1], got {epsilon}")
    if not 0 < xi < 1:
        raise InvalidParameterError(f"xi must be in (0, 1), got {xi}")
    r_scale, f_scale = Fraction(r_scale), Fraction(f_scale)
    if r_scale <= 0 or f_scale <= 0:
        raise InvalidParameterError("r_scale and f_scale must be positive")
    K = estimate_power(k, eps)
    if i_G is not None:
        i_G = Fraction(i_G)
        if not 0 < i_G <= K:
            raise InvalidParameterError(f"i_G must be in (0, K={K}], got {i_G}")
    log_K2 = 2 * a * (1 + eps)  # log2(k^(2(1+eps))), rational
    tail = _ceil(K * (a + 1))
    if i_G is None:
        big = _pow2(2 * a * (2 + eps))
        head = 2 * big * (log_K2 if isinstance(big, int) else float(log_K2))
    else:
        head = Fraction(8 * K * K) / (i_G * i_G) * log_K2
    r_formula = _ceil(head) + tail
    f_formula = _ceil(F_CONSTANT * math.log(K / xi))
    return ScheduleParams(
        k=k,
        epsilon=eps,
        xi=xi,
        i_G=i_G,
        K=K,
        r=max(1, math.ceil(r_formula * r_scale)),
        p=math.log(2) / K,
        tau=Fraction(K - 2, K - 1) if K > 1 else Fraction(0),
        f=max(1, math.ceil(f_formula * f_scale)),
        id_range_max=K**4 * (a + 2) ** 4,
        r_formula=r_formula,
        f_formula=f_formula,
        r_scale=r_scale,
        f_scale=f_scale,
    )


def default_k_values(n: int, epsilon=1) -> list[int]:
    """``k = 2, 4, ...`` until ``K > 4n``, then one more doubling."""
    ks = [2]
    while estimate_power(ks[-1], epsilon) <= 4 * n:
        ks.append(ks[-1] * 2)
    ks.append(ks[-1] * 2)
    return ks


def view_better(a: tuple[int, int] | None, b: tuple[int, int] | None) -> bool:
    """True when certificate view ``a = (K, id)`` beats ``b``."""
    if a is None:
        return False
    if b is None:
        return True
    return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])


def best_view(views) -> tuple[int, int] | None:
    best = None
    for v in views:
        if view_better(v, best):
            best = v
    return best


def decide(node_id, empty: list[bool], status: list[str]) -> bool:
    """Whether a node without an ID draws one at the end of an estimate."""
    return node_id is None and 2 * sum(empty) > len(empty) and status.count(PROBING) > 0


def color_stream(seed: int, node: int, k: int):
    return engine.rng_stream(seed, node, f"revocable/k={k}/color")


def id_stream(seed: int, node: int, k: int):
    return engine.rng_stream(seed, node, f"revocable/k={k}/id")


# -- message encoding ------------------------------------------------------------

def _view_width(k_bits: int, schedules: dict[int, ScheduleParams]):
    widths = {s.K: ceil_log2(s.id_range_max) for s in schedules.values()}

    def width(payload: LinkPayload) -> int:
        view = payload.values[-1]
        if view is None:
            return 1
        K, node_id = view
        if K not in widths or not 1 <= node_id <= 2 ** widths[K]:
            raise EncodingError(f"leader view {view} outside the certificate space")
        return 1 + k_bits + widths[K]

    return width


def make_schema(schedules: dict[int, ScheduleParams], arithmetic: str) -> MessageSchema:
    k_bits = max(1, ceil_log2(len(schedules) + 1))
    view = Field("view", width_fn=_view_width(k_bits, schedules))
    potential = Field("potential", serial=True, width_fn=lambda p: p.values[0][1])
    flag = Field("q_low", 1)
    cflag = Field("white_seen", 1)
    return MessageSchema([
        Kind("diffuse", "diffusion", (potential, flag, cflag, view)),
        Kind("disseminate", "dissemination", (flag, cflag, view)),
    ])


def potential_width(j: int, sched: ScheduleParams, arithmetic: str) -> int:
    """Bits of the potential broadcast in diffusion round ``j`` (bit-serial)."""
    if arithmetic == "fixed":
        return 1 + diffusion.FIXED_BITS
    return 1 + (j - 1) * sched.potential_bits_per_step


# -- per-node automaton ----------------------------------------------------------

class RevocableNode:
    """One node: certification iterations, decision, certificate folding."""

    def __init__(self, node: int, degree: int, seed: int, schedules: list[ScheduleParams], arithmetic: str = "exact"):
        self.node = node
        self.degree = degree
        self.seed = seed
        self.schedules = schedules
        self.arithmetic = arithmetic
        self.node_id: int | None = None
        self.cert_K: int | None = None
        self.view: tuple[int, int] | None = None
        self.leader = False
        self.history: list[dict] = []
        self.k_index = 0
        self.iteration = 0
        self.phase = "diffusion"
        self.j = 0
        self._start_estimate()

    @property
    def sched(self) -> ScheduleParams:
        return self.schedules[self.k_index]

    def _start_estimate(self) -> None:
        s = self.sched
        self.colors = color_stream(self.seed, self.node, s.k)
        self.status: list[str] = []
        self.empty: list[bool] = []
        self.white_iters: list[bool] = []
        self.view_after_first = None
        self.alarm_count = 0
        self.threshold_count = 0
        self.iteration = 0
        self._start_iteration()

    def _start_iteration(self) -> None:
        s = self.sched
        self.iteration += 1
        self.white = self.colors.random() < s.p
        self.c = self.white
        self.q = PROBING
        self.alarmed = False
        if self.arithmetic == "exact":
            self.pot = 0 if self.white else 1
            self.scale = 1
        else:
            self.pot = 0 if self.white else diffusion.FIXED_ONE
            self.scale = diffusion.FIXED_ONE
        self.phase = "diffusion"
        self.j = 1

    def _payload(self) -> LinkPayload:
        s = self.sched
        low = int(self.q == LOW)
        if self.phase == "diffusion":
            width = potential_width(self.j, s, self.arithmetic)
            return LinkPayload("diffuse", (self.pot, width), low, int(self.c), self.view)
        return LinkPayload("disseminate", low, int(self.c), self.view)

    def _fold_views(self, inbox) -> None:
        for msg in inbox.values():
            if view_better(msg.values[-1], self.view):
                self.view = msg.values[-1]

    def _diffusion_receive(self, inbox) -> None:
        s = self.sched
        D = s.D
        neighbours_probing = all(not m.values[1] for m in inbox.values())
        if self.q == PROBING and self.degree <= s.K and neighbours_probing:
            total = sum(m.values[0][0] for m in inbox.values())
            if self.arithmetic == "exact":
                self.pot = self.pot * (D - self.degree) + total
                self.scale *= D
            else:
                self.pot = self.pot + (total - self.degree * self.pot) // D
        else:
            if self.q == PROBING:
                self.alarm_count += 1
            self.q = LOW
            if self.arithmetic == "exact":
                self.scale *= D
            self.pot = self.scale
        self._fold_views(inbox)

    def _threshold(self) -> None:
        s = self.sched
        if self.pot * (s.K - 1) > (s.K - 2) * self.scale:
            if self.q == PROBING:
                self.threshold_count += 1
            self.q = LOW
            self.pot = self.scale

    def _dissemination_receive(self, inbox) -> None:
        for msg in inbox.values():
            if msg.values[0]:
                self.q = LOW
            if msg.values[1]:
                self.c = True
        self._fold_views(inbox)

    def _end_estimate(self) -> None:
        s = self.sched
        chose = decide(self.node_id, self.empty, self.status)
        if chose:
            self.node_id = id_stream(self.seed, self.node, s.k).randint(1, s.id_range_max)
            self.cert_K = s.K
            self.view = (s.K, self.node_id)
        was = self.leader
        self.leader = self.node_id is not None and self.view == (self.cert_K, self.node_id)
        self.history.append({
            "k": s.k,
            "id": self.node_id,
            "K": self.cert_K,
            "view": self.view,
            "view_after_first": self.view_after_first,
            "leader": self.leader,
            "revoked": was and not self.leader,
            "chose": chose,
            "empty": list(self.empty),
            "status": list(self.status),
            "whites": list(self.white_iters),
            "alarms": self.alarm_count,
            "threshold_alarms": self.threshold_count,
        })

    def step(self, r: int, inbox) -> Step:
        s = self.sched
        if r > 1:
            if self.phase == "diffusion":
                self._diffusion_receive(inbox)
                if self.j == s.r:
                    self._threshold()
                    self.phase, self.j = "dissemination", 1
                else:
                    self.j += 1
            else:
                self._dissemination_receive(inbox)
                if self.j == s.K:
                    self.status.append(self.q)
                    self.empty.append(not self.c)
                    self.white_iters.append(self.white)
                    if self.iteration == 1:
                        self.view_after_first = self.view
                    if self.iteration == s.f:
                        self._end_estimate()
                        if self.k_index + 1 == len(self.schedules):
                            return Step(None, halted=True)
                        self.k_index += 1
                        self._start_estimate()
                    else:
                        self._start_iteration()
                else:
                    self.j += 1
        s = self.sched
        surcharge = self.j * s.potential_bits_per_step if self.phase == "diffusion" else 0
        out = None
        if self.degree:
            payload = self._payload()
            out = {p: payload for p in range(1, self.degree + 1)}
        return Step(out, surcharge=surcharge)

    def observe(self) -> dict:
        return {"id": self.node_id, "K": self.cert_K, "view": self.view, "leader": self.leader, "history": self.history}


# -- outcome ---------------------------------------------------------------------

@dataclass
class EstimateSnapshot:
    k: int
    K: int
    r: int
    f: int
    ids: list
    certs: list
    views: list
    views_after_first: list
    leaders: list[int]
    unanimous: bool
    whites_per_iter: list[int]
    chose: list[int]
    alarms: int
    threshold_alarms: int
    probing_iterations: list[int]
    empty_iterations: list[int]
    rounds_logical: int
    rounds_accounted: int
    messages: int
    bits: int
    serial_bits: int
    revocations: int
    max_payload_bits: int = 0
    bit_budget: int = 0

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["views"] = [list(v) if v else None for v in self.views]
        d["views_after_first"] = [list(v) if v else None for v in self.views_after_first]
        return d


@dataclass
class RevocableOutcome:
    n: int
    seed: int
    arithmetic: str
    executor: str
    schedules: list[ScheduleParams]
    snapshots: list[EstimateSnapshot] = field(default_factory=list)
    deviations: list[str] = field(default_factory=list)

    @property
    def final(self) -> EstimateSnapshot:
        return self.snapshots[-1]

    @property
    def exactly_one_leader(self) -> bool:
        return len(self.final.leaders) == 1

    @property
    def unanimous(self) -> bool:
        return self.final.unanimous

    @property
    def stabilized(self) -> bool:
        """No ID drawn during the final estimate and no view changed after its first iteration."""
        last = self.final
        return len(self.snapshots) >= 2 and not last.chose and last.views_after_first == last.views

    @property
    def revocations(self) -> int:
        return sum(s.revocations for s in self.snapshots)

    @property
    def success(self) -> bool:
        return self.exactly_one_leader and self.unanimous and self.stabilized

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.final.leaders:
            out.append("no-leader")
        elif len(self.final.leaders) > 1:
            out.append("multiple-leaders")
        if not self.unanimous:
            out.append("split-views")
        if not self.stabilized:
            out.append("not-stabilized")
        return out

    @property
    def rounds_logical(self) -> int:
        return sum(s.rounds_logical for s in self.snapshots)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "arithmetic": self.arithmetic,
            "executor": self.executor,
            "success": self.success,
            "flags": self.flags,
            "revocations": self.revocations,
            "deviations": self.deviations,
            "schedules": [s.to_dict() for s in self.schedules],
            "snapshots": [s.to_dict() for s in self.snapshots],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_COLUMNS = ("seed", "k", "K", "r", "f", "leaders", "unanimous", "whites_total", "alarms",
                   "threshold_alarms", "rounds_logical", "rounds_accounted", "messages", "bits",
                   "serial_bits", "revocations")

    def csv_rows(self) -> list[dict]:
        return [
            {
                "seed": self.seed, "k": s.k, "K": s.K, "r": s.r, "f": s.f, "leaders": len(s.leaders),
                "unanimous": int(s.unanimous), "whites_total": sum(s.whites_per_iter), "alarms": s.alarms,
                "threshold_alarms": s.threshold_alarms, "rounds_logical": s.rounds_logical,
                "rounds_accounted": s.rounds_accounted, "messages": s.messages, "bits": s.bits,
                "serial_bits": s.serial_bits, "revocations": s.revocations,
            }
            for s in self.snapshots
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.csv_rows())
        return buf.getvalue()


def _snapshot(s: ScheduleParams, records: list[dict], counts: dict) -> EstimateSnapshot:
    views = [rec["view"] for rec in records]
    return EstimateSnapshot(
        k=s.k, K=s.K, r=s.r, f=s.f,
        ids=[rec["id"] for rec in records],
        certs=[rec["K"] for rec in records],
        views=views,
        views_after_first=[rec["view_after_first"] for rec in records],
        leaders=[v for v, rec in enumerate(records) if rec["leader"]],
        unanimous=len(set(views)) == 1 and views[0] is not None,
        whites_per_iter=[sum(rec["whites"][i] for rec in records) for i in range(s.f)],
        chose=[v for v, rec in enumerate(records) if rec["chose"]],
        alarms=sum(rec["alarms"] for rec in records),
        threshold_alarms=sum(rec["threshold_alarms"] for rec in records),
        probing_iterations=[rec["status"].count(PROBING) for rec in records],
        empty_iterations=[sum(rec["empty"]) for rec in records],
        rounds_logical=s.f * s.rounds_per_iteration,
        rounds_accounted=s.f * (s.rounds_per_iteration + s.potential_bits_per_step * s.r * (s.r + 1) // 2),
        messages=counts["messages"],
        bits=counts["bits"],
        serial_bits=counts["serial_bits"],
        revocations=sum(rec["revoked"] for rec in records),
        max_payload_bits=counts["max_bits"],
        bit_budget=counts["budget"],
    )


def _deviations(schedules: list[ScheduleParams]) -> list[str]:
    out = []
    for s in schedules:
        if s.scaled:
            out.append(f"k={s.k}: r={s.r} (formula {s.r_formula}, x{s.r_scale}), f={s.f} (formula {s.f_formula}, x{s.f_scale})")
    return out


# -- engine executor ---------------------------------------------------------------

def _budget_fn(n: int, schedules: list[ScheduleParams]) -> Callable[[int], int]:
    ends = []
    total = 0
    for s in schedules:
        total += s.f * s.rounds_per_iteration
        ends.append(total + 1)
    budgets = [engine.default_bit_budget(n, s.K) for s in schedules]

    def budget(r: int) -> int:
        return budgets[min(bisect.bisect_left(ends, r), len(budgets) - 1)]

    return budget


def _run_engine(graph: PortGraph, schedules: list[ScheduleParams], seed: int, arithmetic: str) -> RevocableOutcome:
    by_k = {s.k: s for s in schedules}
    schema = make_schema(by_k, arithmetic)
    starts = []
    total = 0
    for s in schedules:
        starts.append(total + 1)
        total += s.f * s.rounds_per_iteration
    per_k = [{"messages": 0, "bits": 0, "serial_bits": 0, "max_bits": 0,
              "budget": engine.default_bit_budget(graph.n, s.K)} for s in schedules]

    def observer(r, automata, sent):
        idx = bisect.bisect_right(starts, r) - 1
        tally = per_k[idx]
        for outbox in sent.values():
            for payload in outbox.values():
                bits, serial = schema.encode_bits(payload)
                tally["messages"] += 1
                tally["bits"] += bits
                tally["serial_bits"] += serial
                if bits > tally["max_bits"]:
                    tally["max_bits"] = bits

    config = RunConfig(
        master_seed=seed,
        bit_budget_B=engine.default_bit_budget(graph.n, schedules[-1].K),
        max_rounds=total + 1,
        budget_for_round=_budget_fn(graph.n, schedules),
    )
    result = engine.run(
        graph, lambda v, d: RevocableNode(v, d, seed, schedules, arithmetic), config, schema, observer=observer
    )
    out = RevocableOutcome(graph.n, seed, arithmetic, "engine", schedules, deviations=_deviations(schedules))
    for idx, s in enumerate(schedules):
        records = [obs["history"][idx] for obs in result.observables]
        out.snapshots.append(_snapshot(s, records, per_k[idx]))
    return out


# -- fast executor -----------------------------------------------------------------

class DiffusionCache:
    """Exact powers of the diffusion matrix, shared across seeds."""

    def __init__(self):
        self._powers: dict = {}

    def power(self, graph: PortGraph, D: int, r: int) -> list[list[int]]:
        key = (graph.ports, D, r)
        hit = self._powers.get(key)
        if hit is None:
            hit = self._powers[key] = diffusion.int_matrix_power(diffusion.step_matrix_int(graph, D), r)
        return hit


_DEFAULT_CACHE = DiffusionCache()


def _diffuse_explicit(graph: PortGraph, s: ScheduleParams, whites: list[bool], arithmetic: str):
    """Step-by-step diffusion with alarms; returns (q_low, alarm_count, pot, scale)."""
    n, D, K = graph.n, s.D, s.K
    one = 1 if arithmetic == "exact" else diffusion.FIXED_ONE
    pot = [0 if w else one for w in whites]
    scale = one
    low = [False] * n
    alarms = 0
    for _ in range(s.r):
        prev_low = low
        new_low = list(low)
        new_pot = [0] * n
        if arithmetic == "exact":
            scale *= D
        for v, plist in enumerate(graph.ports):
            if not prev_low[v] and len(plist) <= K and not any(prev_low[u] for u, _ in plist):
                total = sum(pot[u] for u, _ in plist)
                if arithmetic == "exact":
                    new_pot[v] = pot[v] * (D - len(plist)) + total
                else:
                    new_pot[v] = pot[v] + (total - len(plist) * pot[v]) // D
            else:
                if not prev_low[v]:
                    alarms += 1
                new_low[v] = True
                new_pot[v] = scale
        pot, low = new_pot, new_low
        if all(low):
            # nothing changes any more except the common scale
            if arithmetic == "exact":
                remaining = s.r - _ - 1
                scale *= D**remaining
                pot = [scale] * n
            break
    return low, alarms, pot, scale


def _view_bits_sum(graph: PortGraph, dist, views, rounds: int, view_width) -> list[int]:
    """Per node: summed view-field width over ``rounds`` broadcasts."""
    out = []
    for v in range(graph.n):
        order = sorted(range(graph.n), key=lambda u: dist[v][u])
        total = 0
        best = None
        idx = 0
        covered = 0  # rounds accounted so far
        for d in range(0, max(dist[v]) + 1):
            while idx < len(order) and dist[v][order[idx]] == d:
                if view_better(views[order[idx]], best):
                    best = views[order[idx]]
                idx += 1
            # broadcast in round t carries the fold over distance <= t - 1
            span = rounds - covered if d == max(dist[v]) else min(1, rounds - covered)
            if span <= 0:
                break
            total += span * view_width(best)
            covered += span
        out.append(total)
    return out


def _run_fast(graph: PortGraph, schedules: list[ScheduleParams], seed: int, arithmetic: str,
              cache: DiffusionCache) -> RevocableOutcome:
    n = graph.n
    dist = graph.distances()
    degrees = graph.degrees()
    by_k = {s.k: s for s in schedules}
    k_bits = max(1, ceil_log2(len(schedules) + 1))
    id_bits = {s.K: ceil_log2(s.id_range_max) for s in by_k.values()}
    tag_bits = make_schema(by_k, arithmetic).tag_bits
    senders = [v for v in range(n) if degrees[v]]
    round_base = 0

    def view_width(view):
        return 1 if view is None else 1 + k_bits + id_bits[view[0]]

    node_id: list = [None] * n
    cert: list = [None] * n
    views: list = [None] * n
    leader = [False] * n
    out = RevocableOutcome(n, seed, arithmetic, "fast", schedules, deviations=_deviations(schedules))
    for s in schedules:
        colors = [color_stream(seed, v, s.k) for v in range(n)]
        status = [[] for _ in range(n)]
        empty = [[] for _ in range(n)]
        whites_hist = [[] for _ in range(n)]
        alarms = [0] * n
        thresholds = [0] * n
        budget = engine.default_bit_budget(n, s.K)
        counts = {"messages": 0, "bits": 0, "serial_bits": 0, "max_bits": 0, "budget": budget}
        alarm_mode = any(d > s.K for d in degrees)
        power = None
        if not alarm_mode and arithmetic == "exact":
            power = cache.power(graph, s.D, s.r)
            Dr = s.D**s.r
        first_views = None
        pw_sum = sum(potential_width(j, s, arithmetic) for j in range(1, s.r + 1))
        flat_bits = 1 + 1  # q and c
        for it in range(s.f):
            # every payload of the iteration carries one of the views held at its start
            if senders:
                v_max = max(senders, key=lambda v: view_width(views[v]))
                worst = tag_bits + flat_bits + view_width(views[v_max])
                if worst > budget:
                    raise BitBudgetViolation(round_base + it * s.rounds_per_iteration + 1, v_max, 1,
                                             "disseminate", worst, budget)
                counts["max_bits"] = max(counts["max_bits"], worst)
            white = [colors[v].random() < s.p for v in range(n)]
            if power is not None:
                wsum = [sum(power[j][i] for j in range(n) if white[j]) for i in range(n)]
                # potential = 1 - wsum/D^r exceeds tau = (K-2)/(K-1)  iff  D^r > (K-1) wsum
                low_end = [Dr > (s.K - 1) * w for w in wsum]
                for v in range(n):
                    thresholds[v] += low_end[v]
            else:
                low_diff, _, pot, scale = _diffuse_explicit(graph, s, white, arithmetic)
                low_end = list(low_diff)
                for v in range(n):
                    if low_diff[v]:
                        alarms[v] += 1
                    elif pot[v] * (s.K - 1) > (s.K - 2) * scale:
                        low_end[v] = True
                        thresholds[v] += 1
            q_low = [any(low_end[u] for u in range(n) if dist[v][u] <= s.K) for v in range(n)]
            c = [any(white[u] for u in range(n) if dist[v][u] <= s.K) for v in range(n)]
            # accounting: every node broadcasts on every port in every logical round
            vb = _view_bits_sum(graph, dist, views, s.rounds_per_iteration, view_width)
            for v in range(n):
                d = degrees[v]
                counts["messages"] += d * s.rounds_per_iteration
                counts["bits"] += d * (s.rounds_per_iteration * (1 + flat_bits) + vb[v])
                counts["serial_bits"] += d * pw_sum
            reach = s.rounds_per_iteration
            views = [best_view(views[u] for u in range(n) if dist[v][u] <= reach) for v in range(n)]
            if first_views is None:
                first_views = list(views)
            for v in range(n):
                status[v].append(LOW if q_low[v] else PROBING)
                empty[v].append(not c[v])
                whites_hist[v].append(white[v])
        records = []
        for v in range(n):
            chose = decide(node_id[v], empty[v], status[v])
            if chose:
                node_id[v] = id_stream(seed, v, s.k).randint(1, s.id_range_max)
                cert[v] = s.K
                views[v] = (s.K, node_id[v])
            was = leader[v]
            leader[v] = node_id[v] is not None and views[v] == (cert[v], node_id[v])
            records.append({
                "k": s.k, "id": node_id[v], "K": cert[v], "view": views[v], "view_after_first": first_views[v],
                "leader": leader[v],
                "revoked": was and not leader[v], "chose": chose, "empty": empty[v], "status": status[v],
                "whites": whites_hist[v], "alarms": alarms[v], "threshold_alarms": thresholds[v],
            })
        out.snapshots.append(_snapshot(s, records, counts))
        round_base += s.f * s.rounds_per_iteration
    return out


def run_revocable(graph: PortGraph, epsilon=1, xi: float = 0.1, i_G=None, *, r_scale=1, f_scale=1,
                  seed: int = 0, k_values: list[int] | None = None, k_max: int | None = None,
                  arithmetic: str = "exact", executor: str = "fast",
                  cache: DiffusionCache | None = None) -> RevocableOutcome:
    """Simulate the estimate-doubling protocol up to the stop policy.

    By default estimates run until ``K > 4n`` plus one extra doubling; pass
    ``k_max`` or ``k_values`` to choose the estimates explicitly.
    """
    if arithmetic not in ARITHMETIC:
        raise InvalidParameterError(f"arithmetic must be one of {ARITHMETIC}")
    if k_values is None:
        k_values = default_k_values(graph.n, epsilon)
        if k_max is not None:
            k_values = [2]
            while k_values[-1] < k_max:
                k_values.append(k_values[-1] * 2)
    schedules = [schedule(k, epsilon, xi, i_G, r_scale, f_scale) for k in k_values]
    if executor == "engine":
        return _run_engine(graph, schedules, seed, arithmetic)
    if executor == "fast":
        return _run_fast(graph, schedules, seed, arithmetic, cache or _DEFAULT_CACHE)
    raise InvalidParameterError(f"executor must be 'engine' or 'fast', got {executor!r}")
