"""Relabeling nodes and GPUs instead of moving jobs.

A new placement plan usually differs from the old one only in which physical
GPU carries which label. Matching GPUs inside each node pair, then matching
node pairs across the cluster, finds the relabeling that moves the fewest jobs.
"""

from matchsched import ClusterSpec, naive_migration_count, plan_migration, plan_migration_flat
from matchsched.fixtures import (
    RELABEL_ONLY,
    SPLIT_NEWCOMER,
    SPLIT_NEWCOMER_GPUS,
    TWO_NODE_RESHUFFLE,
    plans,
)

# The same four jobs, rotated one GPU to the right.
old, new = plans(RELABEL_ONLY)
print("old plan:", old.to_lists())
print("new plan:", new.to_lists())
print("applied literally:", naive_migration_count(old, new), "jobs move")
print("after relabeling: ", plan_migration(old, new).migration_count, "jobs move")

# Two nodes whose contents mostly swapped places, plus one departure and one arrival.
old, new = plans(TWO_NODE_RESHUFFLE)
result = plan_migration(old, new, ClusterSpec(2, 4))
print("\nnode map (logical -> physical):", result.node_map)
print("moved jobs:", sorted(result.migrated_jobs), "cost", result.total_cost)
print("physical plan:", result.placement.to_lists())

# Matching GPUs across the whole cluster at once can split a multi-GPU job.
old, new = plans(SPLIT_NEWCOMER)
flat = plan_migration_flat(old, new, SPLIT_NEWCOMER_GPUS)
two_level = plan_migration(old, new, ClusterSpec(2, 2), SPLIT_NEWCOMER_GPUS)
print("\nflat:     ", flat.placement.to_lists(), "split:", flat.consolidation_violated)
print("two-level:", two_level.placement.to_lists(), "split:", two_level.consolidation_violated)
