"""Command-line entry point: ``anonle <verb> ...``.

Graphs are given either as a path to an edge-list file or as
``family:n`` (``cycle:16``, ``complete:8``, ``random-regular:64``,
``path:5``, ``erdos-renyi:50``); ``--degree``, ``--p-edge`` and
``--graph-seed`` refine generated families. Results are printed as JSON.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import harness, known_n, revocable
from .errors import AnonLEError
from .graphs import PortGraph, load_edge_list, make_family
from .metrics import compute_metrics, conductance_spectral_bounds, isoperimetric_exact


def _graph(args) -> PortGraph:
    spec = args.graph
    path = Path(spec)
    if path.is_file():
        return load_edge_list(path.read_text(encoding="utf-8"), name=path.name)
    family, sep, size = spec.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"graph must be a file or family:n, got {spec!r}")
    try:
        n = int(size)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size in {spec!r}") from None
    return make_family(family, n, seed=args.graph_seed, degree=args.degree, p_edge=args.p_edge)


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_metrics(args) -> None:
    g = _graph(args)
    gm = compute_metrics(g)
    d = json.loads(gm.to_json())
    if g.n > 1:
        lo, hi = conductance_spectral_bounds(g)
        d["lazy_walk_conductance_bounds"] = [lo, hi]
    _emit(d, args.out)


def cmd_elect_known_n(args) -> None:
    g = _graph(args)
    params = known_n.params_for_graph(g, c=args.c, x_multiplier=Fraction(args.x_multiplier),
                                      n_known=args.n_known, strict_pseudocode=args.strict_pseudocode)
    o = known_n.elect_known_n(g, params, args.seed)
    _emit(o.to_dict(), args.out)


def cmd_elect_revocable(args) -> None:
    g = _graph(args)
    i_G = None
    if args.i_g == "exact":
        i_G = isoperimetric_exact(g)
    elif args.i_g is not None:
        i_G = Fraction(args.i_g)
    o = revocable.run_revocable(
        g, Fraction(args.epsilon), args.xi, i_G, r_scale=Fraction(args.r_scale), f_scale=Fraction(args.f_scale),
        seed=args.seed, k_max=args.k_max, arithmetic=args.arithmetic, executor=args.executor,
    )
    if args.csv:
        Path(args.csv).write_text(o.to_csv(), encoding="utf-8")
    _emit(o.to_dict(), args.out)


def cmd_sweep(args) -> None:
    spec = harness.load_spec(args.spec)
    if args.workers:
        spec.workers = args.workers
    rows, summary = harness.run_experiment(spec)
    if spec.csv_path is None:
        sys.stdout.write(harness.rows_to_csv(rows))
    if spec.summary_path is None:
        _emit(summary, None)


def cmd_fit(args) -> None:
    fit = harness.fit_csv(Path(args.csv).read_text(encoding="utf-8"), metric=args.metric)
    _emit(fit.to_dict(), args.out)


def cmd_pumping_demo(args) -> None:
    report = harness.pumping_wheel_demo(args.n_claimed, args.n_actual, args.trials, args.seed)
    _emit(report.to_dict(), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anonle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def graph_args(sp):
        sp.add_argument("graph", help="edge-list file or family:n")
        sp.add_argument("--degree", type=int, default=4)
        sp.add_argument("--p-edge", type=float, default=0.1)
        sp.add_argument("--graph-seed", type=int, default=0)
        sp.add_argument("--out", help="write JSON here instead of stdout")

    sp = sub.add_parser("metrics", help="conductance, isoperimetric number, mixing time")
    graph_args(sp)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("elect-known-n", help="one run of the known-n election")
    graph_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--c", type=int, default=4)
    sp.add_argument("--x-multiplier", default="1")
    sp.add_argument("--n-known", type=int, help="size bound handed to the nodes (default: actual n)")
    sp.add_argument("--strict-pseudocode", action="store_true", help="every node starts its max-ID fold at its own ID")
    sp.set_defaults(func=cmd_elect_known_n)

    sp = sub.add_parser("elect-revocable", help="one run of the revocable election")
    graph_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epsilon", default="1")
    sp.add_argument("--xi", type=float, default=0.1)
    sp.add_argument("--i-g", help="isoperimetric number, or 'exact' to compute it")
    sp.add_argument("--r-scale", default="1")
    sp.add_argument("--f-scale", default="1")
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--arithmetic", choices=revocable.ARITHMETIC, default="exact")
    sp.add_argument("--executor", choices=("fast", "engine"), default="fast")
    sp.add_argument("--csv", help="also write one CSV row per estimate")
    sp.set_defaults(func=cmd_elect_revocable)

    sp = sub.add_parser("sweep", help="run an experiment spec (INI)")
    sp.add_argument("spec")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fit", help="log-log scaling exponent from a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--metric", default="messages")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("pumping-demo", help="known-n election with a wrong size bound on a large ring")
    sp.add_argument("--n-claimed", type=int, default=8)
    sp.add_argument("--n-actual", type=int, default=64)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_pumping_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (AnonLEError, argparse.ArgumentTypeError, ValueError, OSError) as exc:
        print(f"anonle: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
