"""Small hand-checkable scenarios shared by tests and demos.

Plans are written as nested lists ``[node][gpu] -> job ids``.
"""

from __future__ import annotations

from .cluster import ClusterSpec, Job, ParallelismStrategy, PlacementPlan
from .profiling import ProfileStore

# Single-node migration scenarios: (round i, round i+1, node cost matrix,
# jobs that must move). Matrix rows are round-i GPUs, columns round-(i+1).
SINGLE_NODE_CASES = {
    "rotation": (
        [[[1], [2], [3], [4]]],
        [[[4], [1], [2], [3]]],
        [[1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1]],
        frozenset(),
    ),
    "packed_partner_swap": (
        [[[1, 5], [2], [3], [4]]],
        [[[4, 5], [1], [2], [3]]],
        [[1, 0.5, 1.5, 1.5], [1.5, 1, 0, 1], [1.5, 1, 1, 0], [0.5, 1, 1, 1]],
        frozenset({5}),
    ),
    "transient_jobs": (
        [[[1, 6], [2], [3], [4]]],
        [[[4, 5], [1], [2], [3]]],
        [[1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1]],
        frozenset(),
    ),
}

# A rotation where jobs keep their GPUs up to relabeling but every literal
# GPU id changes: 0 migrations after relabeling, 3 without it.
RELABEL_ONLY = (
    [[[1], [2], [3], []]],
    [[[3], [1], [2], []]],
)

# Two 4-GPU nodes; job 7 finishes and job 9 arrives. Jobs 1, 4 and 6 must
# move under the best relabeling; pairing round-i node 0 with round-(i+1)
# node 1 costs 1.5.
TWO_NODE_RESHUFFLE = (
    [[[1], [2], [3], [4]], [[5], [8], [6], [7]]],
    [[[5], [8], [1], [4]], [[2], [3], [6], [9]]],
)
TWO_NODE_RESHUFFLE_MOVED = frozenset({1, 4, 6})

# Two 4-GPU jobs on separate nodes get packed onto node 0. A GPU-level
# matching that ignores node boundaries has equal-cost optima that split a
# job across nodes.
WHOLE_NODE_MERGE = (
    [[[1], [1], [1], [1]], [[2], [2], [2], [2]]],
    [[[1, 2], [1, 2], [1, 2], [1, 2]], [[], [], [], []]],
)
# One of those optimal GPU-level mappings (round-(i+1) GPU for each round-i
# GPU, flattened node-major); it splits both jobs across nodes.
WHOLE_NODE_MERGE_SPLITTING_MAP = (7, 6, 2, 3, 4, 5, 1, 0)


# A 2-GPU newcomer whose only free slots (under the literal plan) lie on
# different nodes once two 1-GPU jobs stay put. The flat relabeling keeps
# both jobs in place at zero cost and splits the newcomer; the two-level
# relabeling moves one job instead.
SPLIT_NEWCOMER = (
    [[[1], [2]], [[3], [4]]],
    [[[5], [5]], [[1], [3]]],
)
SPLIT_NEWCOMER_GPUS = {1: 1, 2: 1, 3: 1, 4: 1, 5: 2}


def plans(case) -> tuple[PlacementPlan, PlacementPlan]:
    return PlacementPlan.from_lists(case[0]), PlacementPlan.from_lists(case[1])


def strategy_upgrade_packing():
    """Packing scenario where a better pipeline split changes the matching.

    Returns ``(spec, plan, placed, pending, store, upgraded)``: placed jobs
    1-4 occupy a 2x4 cluster, pending jobs 5-8 wait. The default weight of
    the (1, 5) edge is 1.2; running job 1 with ``upgraded`` raises it to
    1.5, which beats the (1, 8) edge of 1.3.
    """
    spec = ClusterSpec(2, 4)
    placed = [
        Job(1, 0.0, 2, "GPT3-3B", 3600.0),
        Job(2, 0.0, 1, "ResNet-50", 3600.0),
        Job(3, 0.0, 1, "VGG-19", 3600.0),
        Job(4, 0.0, 4, "DCGAN", 3600.0),
    ]
    pending = [
        Job(5, 10.0, 2, "ResNet-50", 3600.0),
        Job(6, 10.0, 1, "PointNet", 3600.0),
        Job(7, 10.0, 1, "DCGAN", 3600.0),
        Job(8, 10.0, 2, "VGG-19", 3600.0),
    ]
    plan = PlacementPlan.from_lists([[[1], [1], [2], [3]], [[4], [4], [4], [4]]])
    upgraded = ParallelismStrategy("PP", (14, 18))
    store = ProfileStore()
    for job in placed + pending:
        store.set_isolated(job.model_kind, job.num_gpus, 10.0 * job.num_gpus)
    store.set_pair("GPT3-3B", "ResNet-50", 2, 0.5, 0.7)  # 1.2
    store.set_pair("GPT3-3B", "VGG-19", 2, 0.625, 0.675)  # 1.3
    store.set_pair("ResNet-50", "PointNet", 1, 0.75, 0.65)  # 1.4
    store.set_pair("ResNet-50", "DCGAN", 1, 0.5, 0.6)  # 1.1
    store.set_pair("VGG-19", "PointNet", 1, 0.6, 0.6)  # 1.2
    store.set_pair("VGG-19", "DCGAN", 1, 0.5, 0.5)  # 1.0
    even = ParallelismStrategy("PP", (16, 16))
    store.set_candidates("GPT3-3B", 2, [even, upgraded])
    store.set_pair("GPT3-3B", "ResNet-50", 2, 0.75, 0.75, strategy_a=upgraded)  # 1.5
    store.set_pair("GPT3-3B", "ResNet-50", 2, 0.5, 0.7, strategy_a=even)
    store.set_pair("GPT3-3B", "VGG-19", 2, 0.625, 0.675, strategy_a=even)
    store.mark_oom("GPT3-3B", "VGG-19", 2, upgraded)
    return spec, plan, placed, pending, store, upgraded


def two_model_pair_store() -> ProfileStore:
    """PointNet (50 it/s alone, 15 packed) with GPT3-3B (2 alone, 1 packed) on 8 GPUs."""
    store = ProfileStore()
    store.set_isolated("PointNet", 8, 50.0)
    store.set_isolated("GPT3-3B", 8, 2.0)
    store.set_pair_raw("PointNet", "GPT3-3B", 8, 15.0, 1.0)
    return store
