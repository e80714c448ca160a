"""Leader election in anonymous networks: simulator, protocols and experiment harness."""
from .graphs import PortGraph, gen_complete, gen_cycle, gen_path, gen_random_regular, load_edge_list, make_family
from .known_n import KnownNParams, elect_known_n, params_for_graph
from .metrics import compute_metrics
from .revocable import run_revocable, schedule

__all__ = [
    "PortGraph",
    "gen_complete",
    "gen_cycle",
    "gen_path",
    "gen_random_regular",
    "load_edge_list",
    "make_family",
    "KnownNParams",
    "elect_known_n",
    "params_for_graph",
    "compute_metrics",
    "run_revocable",
    "schedule",
]
