"""Seeded experiment sweeps, scaling fits and the wrong-size demonstration.

An experiment is described by an INI file::

    [experiment]
    protocol = known_n          ; or revocable
    family = random-regular     ; cycle, complete, path, random-regular, erdos-renyi
    sizes = 64, 128, 256
    trials = 50
    seed_base = 1000
    degree = 4                  ; random-regular only
    graph_seed = 7
    graph_per_trial = false     ; true: a fresh graph for every trial
    workers = 1

    [params]                    ; protocol overrides
    c = 4
    x_multiplier = 1

    [output]
    csv = results.csv
    summary = summary.json

Relative output paths resolve against the spec file's directory. Trial
``t`` of every size uses protocol seed ``seed_base + t``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import known_n, revocable
from .errors import InvalidParameterError, SpecError
from .graphs import PortGraph, gen_cycle, make_family, sub_seed
from .metrics import isoperimetric_exact

CSV_COLUMNS = (
    "protocol", "family", "n", "m", "trial", "seed", "messages", "bits", "rounds",
    "rounds_accounted", "leaders", "exactly_one", "flags",
)
PROTOCOLS = ("known_n", "revocable")
KNOWN_N_PARAMS = {"c": int, "x_multiplier": Fraction, "strict_pseudocode": bool}
REVOCABLE_PARAMS = {
    "epsilon": Fraction, "xi": float, "r_scale": Fraction, "f_scale": Fraction, "k_max": int,
    "i_G": str, "arithmetic": str,
}


@dataclass
class ExperimentSpec:
    protocol: str
    family: str
    sizes: list[int]
    trials: int
    seed_base: int = 0
    degree: int = 4
    p_edge: float = 0.1
    graph_seed: int = 0
    graph_per_trial: bool = False
    workers: int = 1
    params: dict = field(default_factory=dict)
    csv_path: Path | None = None
    summary_path: Path | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise SpecError(f"[experiment] protocol: expected one of {PROTOCOLS}, got {self.protocol!r}")
        if self.trials < 1:
            raise SpecError(f"[experiment] trials: must be >= 1, got {self.trials}")
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise SpecError("[experiment] sizes: need at least one positive size")
        if self.sizes != sorted(self.sizes):
            raise SpecError(f"[experiment] sizes: must be ascending, got {self.sizes}")
        if self.workers < 1:
            raise SpecError("[experiment] workers: must be >= 1")

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol, "family": self.family, "sizes": self.sizes, "trials": self.trials,
            "seed_base": self.seed_base, "degree": self.degree, "p_edge": self.p_edge,
            "graph_seed": self.graph_seed, "graph_per_trial": self.graph_per_trial,
            "params": {k: str(v) for k, v in sorted(self.params.items())},
        }


def _field(section: configparser.SectionProxy, key: str, conv, default=None):
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise SpecError(f"[{section.name}] {key}: missing")
        return default
    try:
        if conv is bool:
            return section.getboolean(key)
        return conv(raw)
    except ValueError as exc:
        raise SpecError(f"[{section.name}] {key}: cannot parse {raw!r} ({exc})") from None


def parse_spec(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"spec syntax error: {exc}") from None
    if not cp.has_section("experiment"):
        raise SpecError("missing [experiment] section")
    ex = cp["experiment"]
    known = {"protocol", "family", "sizes", "trials", "seed_base", "degree", "p_edge", "graph_seed",
             "graph_per_trial", "workers"}
    for key in ex:
        if key not in known:
            raise SpecError(f"[experiment] {key}: unknown field")
    protocol = _field(ex, "protocol", str)
    sizes = _field(ex, "sizes", lambda s: [int(x) for x in s.replace(",", " ").split()])
    allowed = KNOWN_N_PARAMS if protocol == "known_n" else REVOCABLE_PARAMS
    params = {}
    if cp.has_section("params"):
        for key in cp["params"]:
            if key not in {k.lower() for k in allowed}:
                raise SpecError(f"[params] {key}: unknown parameter for protocol {protocol!r}")
            name = next(k for k in allowed if k.lower() == key)
            params[name] = _field(cp["params"], key, allowed[name])
    out = cp["output"] if cp.has_section("output") else None
    base = base_dir or Path(".")

    def out_path(key):
        if out is None or out.get(key) is None:
            return None
        p = Path(out.get(key))
        return p if p.is_absolute() else base / p

    return ExperimentSpec(
        protocol=protocol,
        family=_field(ex, "family", str),
        sizes=sizes,
        trials=_field(ex, "trials", int),
        seed_base=_field(ex, "seed_base", int, 0),
        degree=_field(ex, "degree", int, 4),
        p_edge=_field(ex, "p_edge", float, 0.1),
        graph_seed=_field(ex, "graph_seed", int, 0),
        graph_per_trial=_field(ex, "graph_per_trial", bool, False),
        workers=_field(ex, "workers", int, 1),
        params=params,
        csv_path=out_path("csv"),
        summary_path=out_path("summary"),
    )


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)


# -- single trials ---------------------------------------------------------------

def known_n_row(graph: PortGraph, params: known_n.KnownNParams, seed: int) -> dict:
    o = known_n.elect_known_n(graph, params, seed)
    return {
        "messages": o.messages, "bits": o.bits, "rounds": o.rounds, "rounds_accounted": o.rounds,
        "leaders": len(o.leaders), "exactly_one": int(o.exactly_one_leader), "flags": ";".join(o.flags),
    }


def revocable_row(graph: PortGraph, params: dict, seed: int) -> dict:
    kw = dict(params)
    i_G = kw.pop("i_G", None)
    if i_G == "exact":
        i_G = isoperimetric_exact(graph)
    elif i_G is not None:
        i_G = Fraction(i_G)
    o = revocable.run_revocable(graph, i_G=i_G, seed=seed, **kw)
    snaps = o.snapshots
    return {
        "messages": sum(s.messages for s in snaps), "bits": sum(s.bits for s in snaps),
        "rounds": o.rounds_logical, "rounds_accounted": sum(s.rounds_accounted for s in snaps),
        "leaders": len(o.final.leaders), "exactly_one": int(o.success), "flags": ";".join(o.flags),
    }


def _graph_for(spec: ExperimentSpec, n: int, trial: int) -> PortGraph:
    seed = sub_seed(spec.graph_seed, n * 1_000_003 + (trial if spec.graph_per_trial else 0))
    return make_family(spec.family, n, seed=seed, degree=spec.degree, p_edge=spec.p_edge)


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], dict]:
    """Run every (size, trial) point; return CSV rows and the summary."""
    jobs = []
    for n in spec.sizes:
        shared = None
        for t in range(spec.trials):
            g = _graph_for(spec, n, t) if spec.graph_per_trial or shared is None else shared
            shared = g
            jobs.append((n, t, g))
    param_cache: dict = {}

    def protocol_params(g: PortGraph):
        key = g.ports
        if key not in param_cache:
            kw = {k: v for k, v in spec.params.items() if k in KNOWN_N_PARAMS}
            param_cache[key] = known_n.params_for_graph(g, **kw)
        return param_cache[key]

    if spec.protocol == "known_n":
        for _, _, g in jobs:
            protocol_params(g)

    def run_one(job):
        n, t, g = job
        seed = spec.seed_base + t
        if spec.protocol == "known_n":
            row = known_n_row(g, protocol_params(g), seed)
        else:
            row = revocable_row(g, spec.params, seed)
        base = {"protocol": spec.protocol, "family": spec.family, "n": g.n, "m": g.m, "trial": t, "seed": seed}
        base.update(row)
        return base

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(run_one, jobs))
    else:
        rows = [run_one(j) for j in jobs]
    rows.sort(key=lambda r: (r["n"], r["trial"]))
    summary = summarize(rows, spec)
    if spec.csv_path is not None:
        spec.csv_path.write_text(rows_to_csv(rows), encoding="utf-8")
    if spec.summary_path is not None:
        spec.summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rows, summary


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in CSV_COLUMNS})
    return buf.getvalue()


def _stats(values: list[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize(rows: list[dict], spec: ExperimentSpec | None = None) -> dict:
    """Per-size means, standard deviations and failure rates.

    Shape: ``{"spec": {...} | null, "points": [{"n", "m", "trials",
    "messages_mean", "messages_std", "bits_mean", "bits_std", "rounds_mean",
    "rounds_std", "failure_rate", "flag_counts"}], "fit": {...} | null}``.
    """
    points = []
    for n in sorted({r["n"] for r in rows}):
        group = [r for r in rows if r["n"] == n]
        flags: dict[str, int] = {}
        for r in group:
            for f in filter(None, r["flags"].split(";")):
                flags[f] = flags.get(f, 0) + 1
        point = {"n": n, "m": group[0]["m"], "trials": len(group)}
        for key in ("messages", "bits", "rounds"):
            point[f"{key}_mean"], point[f"{key}_std"] = _stats([float(r[key]) for r in group])
        point["failure_rate"] = 1.0 - sum(int(r["exactly_one"]) for r in group) / len(group)
        point["flag_counts"] = dict(sorted(flags.items()))
        points.append(point)
    fit = None
    if len(points) >= 2:
        fit = scaling_fit([(p["n"], p["messages_mean"]) for p in points]).to_dict()
    return {"spec": spec.to_dict() if spec else None, "points": points, "fit": fit}


# -- scaling fit -----------------------------------------------------------------

@dataclass
class ScalingFit:
    points: list[tuple[float, float]]
    exponent: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "exponent": self.exponent,
                "intercept": self.intercept, "r_squared": self.r_squared}


def scaling_fit(points) -> ScalingFit:
    """Least-squares slope of ``log(value)`` against ``log(size)``."""
    pts = [(float(s), float(v)) for s, v in points]
    if len(pts) < 2:
        raise InvalidParameterError("scaling fit needs at least two points")
    if any(s <= 0 or v <= 0 for s, v in pts):
        raise InvalidParameterError("scaling fit needs positive sizes and values")
    if len({s for s, _ in pts}) < 2:
        raise InvalidParameterError("scaling fit needs at least two distinct sizes")
    x = np.log([s for s, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid**2).sum()) / ss_tot
    if not math.isfinite(slope):
        raise InvalidParameterError("scaling fit produced a non-finite exponent")
    return ScalingFit(pts, float(slope), float(intercept), r2)


def fit_csv(text: str, metric: str = "messages") -> ScalingFit:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or metric not in rows[0] or "n" not in rows[0]:
        raise InvalidParameterError(f"CSV needs columns 'n' and {metric!r}")
    sizes = sorted({int(r["n"]) for r in rows})
    return scaling_fit([(n, statistics.fmean(float(r[metric]) for r in rows if int(r["n"]) == n)) for n in sizes])


# -- wrong size knowledge ----------------------------------------------------------

@dataclass
class PumpingReport:
    n_claimed: int
    n_actual: int
    trials: int
    zero_leaders: int
    multiple_leaders: int
    params: dict
    flag_counts: dict

    @property
    def failures(self) -> int:
        return self.zero_leaders + self.multiple_leaders

    @property
    def failure_frequency(self) -> float:
        return self.failures / self.trials

    def to_dict(self) -> dict:
        return {
            "n_claimed": self.n_claimed, "n_actual": self.n_actual, "trials": self.trials,
            "zero_leaders": self.zero_leaders, "multiple_leaders": self.multiple_leaders,
            "not_exactly_one": self.failures, "failure_frequency": self.failure_frequency,
            "params": self.params, "flag_counts": self.flag_counts,
        }


def pumping_wheel_demo(n_claimed: int, n_actual: int, trials: int, seed: int = 0) -> PumpingReport:
    """Run the known-n election tuned for a ``n_claimed``-cycle on a larger cycle.

    ``n_actual == n_claimed`` is the correctly informed baseline; otherwise
    the actual ring must be at least four times the claimed size.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if n_claimed < 3:
        raise InvalidParameterError("n_claimed must be >= 3 (smallest cycle)")
    if n_actual != n_claimed and n_actual < 4 * n_claimed:
        raise InvalidParameterError(f"need n_actual >= 4 * n_claimed, got {n_actual} < {4 * n_claimed}")
    params = known_n.params_for_graph(gen_cycle(n_claimed))
    ring = gen_cycle(n_actual)
    zero = multi = 0
    flags: dict[str, int] = {}
    for t in range(trials):
        o = known_n.elect_known_n(ring, params, seed + t)
        zero += not o.leaders
        multi += len(o.leaders) > 1
        for f in o.flags:
            flags[f] = flags.get(f, 0) + 1
    return PumpingReport(n_claimed, n_actual, trials, zero, multi, params.to_dict(), dict(sorted(flags.items())))
