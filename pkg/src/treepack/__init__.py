"""Packing bounded-degree trees into G(n,p) by online sprinkling."""

from .graph_tools import (HostGraph, MatchingInstance, check_expansion, connect_pairs,
                          generalized_matching, gnp, sample_subgraph)
from .probability import (BennettParams, bennett_tail, bennett_tail_raw, harmonic_gap,
                          order_stat_moment, validate_params)
from .spanning_pipeline import SpanningConfig, batch_split, embed_tree_two_stage, pack_spanning
from .sprinkle_engine import ClockStore, PackingOutcome, check_degree_cap, pack, run_round, sample_step
from .tree_core import (Tree, TreeSpec, bfs_order, count_leaves, find_bare_paths, gen_tree,
                        parse_tree_spec, partition_tree)
from .verify import overlap_statistic, stat_battery, verify_packing

__version__ = "0.1.0"

__all__ = [
    "Tree", "TreeSpec", "bfs_order", "partition_tree", "count_leaves", "find_bare_paths",
    "gen_tree", "parse_tree_spec",
    "ClockStore", "PackingOutcome", "pack", "run_round", "sample_step", "check_degree_cap",
    "HostGraph", "MatchingInstance", "sample_subgraph", "gnp", "check_expansion",
    "generalized_matching", "connect_pairs",
    "BennettParams", "bennett_tail", "bennett_tail_raw", "order_stat_moment", "validate_params",
    "harmonic_gap",
    "SpanningConfig", "batch_split", "embed_tree_two_stage", "pack_spanning",
    "verify_packing", "overlap_statistic", "stat_battery",
]
