import numpy as np
import pytest

from matchsched.cluster import (
    ClusterSpec,
    Job,
    ParallelismStrategy,
    PlacementPlan,
    gpu_set_of,
    validate_plan,
)
from matchsched.errors import NotPlaced, ShapeMismatch, UnknownJob
from matchsched.fixtures import TWO_NODE_RESHUFFLE

from oracles import random_plan, random_relabeling


def kinds(violations):
    return {v.kind for v in violations}


def test_split_two_gpu_job_violates_consolidation():
    plan = PlacementPlan.from_lists([[[1], [], [], []], [[1], [], [], []]])
    assert kinds(validate_plan(plan, ClusterSpec(2, 4), {1: 2})) == {"consolidation"}


def test_three_jobs_on_one_gpu_violates_capacity():
    plan = PlacementPlan.from_lists([[[1, 2, 3], [], [], []]])
    assert kinds(validate_plan(plan, ClusterSpec(1, 4), {1: 1, 2: 1, 3: 1})) == {"capacity"}


def test_reshuffle_round_i_plan_is_valid():
    plan = PlacementPlan.from_lists(TWO_NODE_RESHUFFLE[0])
    assert validate_plan(plan, ClusterSpec(2, 4), {j: 1 for j in range(1, 9)}) == []


def test_gpu_count_mismatch_reported():
    plan = PlacementPlan.from_lists([[[1], [1], [], []]])
    assert kinds(validate_plan(plan, ClusterSpec(1, 4), {1: 1})) == {"gpu_count"}


def test_multi_node_job_must_fill_whole_nodes():
    ok = PlacementPlan.from_lists([[[1]] * 4, [[1]] * 4])
    assert validate_plan(ok, ClusterSpec(2, 4), {1: 8}) == []
    partial = PlacementPlan.from_lists([[[1]] * 4 + [[]] * 0, [[1], [1], [1], [1]], [[], [], [], []]])
    assert validate_plan(partial, ClusterSpec(3, 4), {1: 8}) == []
    uneven = PlacementPlan.from_lists([[[1], [1], [1], []], [[1], [1], [1], [1]], [[1], [], [], []]])
    assert "consolidation" in kinds(validate_plan(uneven, ClusterSpec(3, 4), {1: 8}))


def test_unknown_job_raises():
    plan = PlacementPlan.from_lists([[[7], [], [], []]])
    with pytest.raises(UnknownJob):
        validate_plan(plan, ClusterSpec(1, 4), {})


def test_shape_mismatch_is_a_violation():
    plan = PlacementPlan.from_lists([[[], []]])
    assert kinds(validate_plan(plan, ClusterSpec(1, 4), {})) == {"shape"}


def test_ragged_plan_rejected():
    with pytest.raises(ShapeMismatch):
        PlacementPlan.from_lists([[[], []], [[]]])


def test_gpu_set_of():
    plan = PlacementPlan.from_lists([[[], [], [1], []], [[2], [2], [], []]])
    assert gpu_set_of(plan, 1) == {(0, 2)}
    assert gpu_set_of(plan, 2) == {(1, 0), (1, 1)}
    single = PlacementPlan.from_lists([[[1], [2], [2], [4]]])
    assert {g for _, g in gpu_set_of(single, 2)} == {1, 2}
    with pytest.raises(NotPlaced):
        gpu_set_of(plan, 9)


def test_relabeling_preserves_validity():
    rng = np.random.default_rng(2)
    for _ in range(200):
        nodes, per = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        plan, jobs = random_plan(rng, nodes, per)
        spec = ClusterSpec(nodes, per)
        assert validate_plan(plan, spec, jobs) == []
        assert validate_plan(random_relabeling(rng, plan), spec, jobs) == []
        for job, slots in plan.job_slots().items():
            assert len(gpu_set_of(plan, job)) == jobs[job] == len(slots)


def test_plan_helpers_roundtrip():
    spec = ClusterSpec(2, 2)
    plan = PlacementPlan.from_assignments(spec, {1: [(0, 0), (0, 1)], 2: [(1, 1)]})
    assert plan.to_lists() == [[[1], [1]], [[], [2]]]
    assert plan.without([1]).jobs() == {2}
    assert plan.restricted_to([1]).jobs() == {1}
    assert plan.with_job(3, [(1, 1)]).nodes[1][1] == {2, 3}
    assert PlacementPlan.empty(spec).jobs() == set()


def test_cluster_spec_from_total():
    assert ClusterSpec.from_total(32, 4) == ClusterSpec(8, 4)
    with pytest.raises(ValueError):
        ClusterSpec.from_total(30, 4)
    with pytest.raises(ValueError):
        ClusterSpec(0, 4)


def test_strategy_keys_roundtrip():
    pp = ParallelismStrategy("PP", (3, 3, 3, 4, 4, 5, 5, 5))
    assert pp.key == "PP:3,3,3,4,4,5,5,5"
    assert ParallelismStrategy.from_key(pp.key) == pp
    assert ParallelismStrategy.from_dict(pp.to_dict()) == pp
    assert ParallelismStrategy.from_key("TP") == ParallelismStrategy("TP")
    with pytest.raises(ValueError):
        ParallelismStrategy("PP", (0, 2))
    with pytest.raises(ValueError):
        ParallelismStrategy("DP", (1,))
    with pytest.raises(ValueError):
        ParallelismStrategy("ZZ")


def test_job_progress_accounting():
    job = Job(1, 0.0, 2, "ResNet-50", 1.5)
    assert job.total_work_us == 1_500_000
    job.progress_us = 500_000
    assert job.remaining_us == 1_000_000 and job.progress == 0.5
    with pytest.raises(ValueError):
        Job(2, 0.0, 0, "ResNet-50", 1.0)
