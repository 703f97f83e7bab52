"""Migration-minimizing relabeling between consecutive placement plans.

A job present in both rounds is migrated when its physical GPU set changes.
Because GPUs are homogeneous, the round ``i+1`` plan can be relabeled (nodes
permuted, then GPUs permuted inside each node) before being applied, and the
relabeling is chosen to minimize the amortized move-in/move-out cost.

Cost of pairing GPU ``u`` (round ``i``) with GPU ``v`` (round ``i+1``)::

    sum over jobs j in JS_u ^ JS_v of 1 / (2 * num_gpus(j))

Only jobs present in both rounds enter the cost.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .assignment import solve_min_cost
from .cluster import ClusterSpec, PlacementPlan, Slot, validate_plan
from .errors import ShapeMismatch

# Node-level problems up to this many GPUs are solved for all node pairs at
# once by enumerating permutations in lexicographic order.
_BATCH_ENUM_MAX_GPUS = 5


@dataclass(frozen=True)
class NodeMatch:
    """Optimal GPU pairing between one round-``i`` node and one round-``i+1`` node.

    ``gpu_map[u]`` is the round-``i+1`` GPU whose jobs land on round-``i`` GPU ``u``.
    """

    cost: float
    gpu_map: tuple[int, ...]


@dataclass(frozen=True)
class MigrationPlan:
    """Relabeling of the round-``i+1`` plan onto physical GPUs.

    ``slot_map[l][v]`` is the physical ``(node, gpu)`` receiving logical GPU
    ``v`` of logical node ``l``. ``node_map[l]`` is the physical node of
    logical node ``l`` (``None`` for the flat variant, which does not work
    node by node).
    """

    slot_map: tuple[tuple[Slot, ...], ...]
    node_map: tuple[int, ...] | None
    total_cost: float
    migrated_jobs: frozenset[int]
    placement: PlacementPlan
    consolidation_violated: bool = False

    @property
    def migration_count(self) -> int:
        return len(self.migrated_jobs)

    @property
    def gpu_maps(self) -> tuple[tuple[int, ...], ...]:
        """``gpu_maps[l][v]``: physical GPU index for logical slot ``(l, v)``."""
        return tuple(tuple(g for _, g in node) for node in self.slot_map)


# Costs are computed in integer units of 1 / (2 * lcm(GPU counts)) so sums are
# exact; beyond this denominator plain floats are used instead.
_MAX_DENOMINATOR = 1 << 24


def _unit_weights(counts: Mapping[int, int]) -> tuple[dict[int, float], int]:
    """Per-job cost ``1 / (2 g)`` scaled by a common denominator."""
    denom = 2 * math.lcm(*counts.values()) if counts else 1
    if denom > _MAX_DENOMINATOR:
        return {j: 1.0 / (2 * g) for j, g in counts.items()}, 1
    return {j: float(denom // (2 * g)) for j, g in counts.items()}, denom


def _job_weights(plan_i: PlacementPlan, common, jobs: Mapping | None) -> tuple[dict[int, float], int]:
    if jobs is not None:
        counts = {j: (jobs[j] if isinstance(jobs[j], int) else jobs[j].num_gpus) for j in common}
    else:
        slots = plan_i.job_slots()
        counts = {j: len(slots[j]) for j in common}
    return _unit_weights(counts)


def _gpu_pair_costs(plan_i: PlacementPlan, plan_next: PlacementPlan, weights: dict[int, float]) -> np.ndarray:
    """Flat ``(K, K)`` matrix of per-GPU-pair costs over all cluster GPUs."""
    job_index = {j: x for x, j in enumerate(sorted(weights))}
    w = np.array([weights[j] for j in sorted(weights)])
    k = plan_i.num_nodes * plan_i.gpus_per_node

    def incidence(plan):
        inc = np.zeros((k, len(job_index)))
        for q, gpu in enumerate(g for node in plan.nodes for g in node):
            for j in gpu:
                if j in job_index:
                    inc[q, job_index[j]] = 1.0
        return inc

    a, b = incidence(plan_i), incidence(plan_next)
    wa, wb = a @ w, b @ w
    shared = (a * w) @ b.T
    return wa[:, None] + wb[None, :] - 2.0 * shared


def _common_jobs(plan_i: PlacementPlan, plan_next: PlacementPlan) -> set[int]:
    return plan_i.jobs() & plan_next.jobs()


def _check_pair(plan_i: PlacementPlan, plan_next: PlacementPlan, spec: ClusterSpec | None):
    if plan_i.num_nodes != plan_next.num_nodes:
        raise ShapeMismatch(f"node counts differ: {plan_i.num_nodes} vs {plan_next.num_nodes}")
    if plan_i.gpus_per_node != plan_next.gpus_per_node:
        raise ShapeMismatch(f"GPU counts differ: {plan_i.gpus_per_node} vs {plan_next.gpus_per_node}")
    if spec is not None:
        plan_i.check_shape(spec)


def _node_units(gpus_i: Sequence, gpus_next: Sequence, num_gpus: Mapping[int, int]):
    if len(gpus_i) != len(gpus_next):
        raise ShapeMismatch(f"nodes have {len(gpus_i)} and {len(gpus_next)} GPUs")
    weights, denom = _unit_weights(num_gpus)
    size = len(gpus_i)
    cost = np.zeros((size, size))
    for u, ju in enumerate(gpus_i):
        for v, jv in enumerate(gpus_next):
            cost[u, v] = sum(weights[j] for j in set(ju) ^ set(jv))
    return cost, denom


def node_cost_matrix(gpus_i: Sequence, gpus_next: Sequence, num_gpus: Mapping[int, int]) -> np.ndarray:
    """The ``k_l x k_l`` GPU-pair cost matrix for one node pair.

    ``num_gpus`` maps each job on either node to its GPU count.
    """
    cost, denom = _node_units(gpus_i, gpus_next, num_gpus)
    return cost / denom


def node_level_matching(
    gpus_i: Sequence,
    gpus_next: Sequence,
    num_gpus: Mapping[int, int],
) -> NodeMatch:
    """Match the GPUs of one round-``i`` node to one round-``i+1`` node.

    ``gpus_i``/``gpus_next`` hold the job sets of each GPU, with jobs not
    common to both rounds already removed. ``num_gpus`` gives each job's
    GPU count.
    """
    cost, denom = _node_units(gpus_i, gpus_next, num_gpus)
    assignment = solve_min_cost(cost)
    return NodeMatch(assignment.total_cost / denom, assignment.mapping)


def _all_node_matches(gpu_costs: np.ndarray, num_nodes: int, per_node: int):
    """Optimal cost and GPU map for every (round-i node, round-i+1 node) pair."""
    blocks = gpu_costs.reshape(num_nodes, per_node, num_nodes, per_node).transpose(0, 2, 1, 3)
    if per_node <= _BATCH_ENUM_MAX_GPUS:
        perms = np.array(list(itertools.permutations(range(per_node))))
        rows = np.arange(per_node)
        totals = blocks[:, :, rows[None, :], perms].sum(axis=-1)
        best = totals.min(axis=-1)
        first = np.argmax(totals <= best[..., None] * (1 + 1e-12), axis=-1)
        return best, perms[first]
    best = np.zeros((num_nodes, num_nodes))
    maps = np.zeros((num_nodes, num_nodes, per_node), dtype=np.int64)
    for k in range(num_nodes):
        for l in range(num_nodes):
            a = solve_min_cost(blocks[k, l])
            best[k, l] = a.total_cost
            maps[k, l] = a.mapping
    return best, maps


def _relabel(plan_next: PlacementPlan, slot_map) -> PlacementPlan:
    grid = [[frozenset()] * plan_next.gpus_per_node for _ in range(plan_next.num_nodes)]
    for l, node in enumerate(plan_next.nodes):
        for v, gpu in enumerate(node):
            k, u = slot_map[l][v]
            grid[k][u] = gpu
    return PlacementPlan(tuple(tuple(node) for node in grid))


def _moved(plan_i: PlacementPlan, relabeled: PlacementPlan, common) -> frozenset[int]:
    before = plan_i.job_slots()
    after = relabeled.job_slots()
    return frozenset(j for j in common if before[j] != after[j])


def _breaks_consolidation(logical: PlacementPlan, relabeled: PlacementPlan) -> bool:
    counts = {j: len(s) for j, s in logical.job_slots().items()}
    spec = ClusterSpec(logical.num_nodes, logical.gpus_per_node)

    def bad(plan):
        return {v.job for v in validate_plan(plan, spec, counts, max_pack=10**9)
                if v.kind == "consolidation"}

    return bool(bad(relabeled) - bad(logical))


def plan_migration(
    plan_i: PlacementPlan,
    plan_next: PlacementPlan,
    spec: ClusterSpec | None = None,
    jobs: Mapping | None = None,
) -> MigrationPlan:
    """Two-level migration minimization: node-level matching inside a cluster-level one.

    Jobs absent from either round are ignored for cost purposes but keep
    their logical slots in the returned placement (remapped with their node
    and GPU). Job GPU counts come from ``jobs`` when given, otherwise from
    the number of slots each job holds in ``plan_i``.
    """
    _check_pair(plan_i, plan_next, spec)
    common = _common_jobs(plan_i, plan_next)
    weights, denom = _job_weights(plan_i, common, jobs)
    nodes, per_node = plan_i.num_nodes, plan_i.gpus_per_node
    gpu_costs = _gpu_pair_costs(plan_i, plan_next, weights)
    node_costs, node_maps = _all_node_matches(gpu_costs, nodes, per_node)
    cluster = solve_min_cost(node_costs)

    slot_map: list = [None] * nodes
    node_map = [0] * nodes
    for k, l in enumerate(cluster.mapping):
        node_map[l] = k
        logical = [None] * per_node
        for u, v in enumerate(node_maps[k, l]):
            logical[int(v)] = (k, u)
        slot_map[l] = tuple(logical)
    slot_map = tuple(slot_map)
    relabeled = _relabel(plan_next, slot_map)
    return MigrationPlan(
        slot_map=slot_map,
        node_map=tuple(node_map),
        total_cost=cluster.total_cost / denom,
        migrated_jobs=_moved(plan_i, relabeled, common),
        placement=relabeled,
        consolidation_violated=_breaks_consolidation(plan_next, relabeled),
    )


def flat_mapping_plan(
    plan_i: PlacementPlan,
    plan_next: PlacementPlan,
    mapping: Sequence[int],
    total_cost: float | None = None,
) -> MigrationPlan:
    """Apply a flat GPU mapping (``mapping[q_i] = q_next`` over flat GPU indices).

    Used by :func:`plan_migration_flat`; exposed so that any optimal flat
    solution can be checked for consolidation, not only the one the solver
    happens to return.
    """
    _check_pair(plan_i, plan_next, None)
    per_node = plan_i.gpus_per_node
    size = plan_i.num_nodes * per_node
    if sorted(mapping) != list(range(size)):
        raise ValueError("flat mapping must be a permutation of all GPUs")
    logical: list[list] = [[None] * per_node for _ in range(plan_i.num_nodes)]
    for q_i, q_next in enumerate(mapping):
        logical[q_next // per_node][q_next % per_node] = (q_i // per_node, q_i % per_node)
    slot_map = tuple(tuple(node) for node in logical)
    common = _common_jobs(plan_i, plan_next)
    if total_cost is None:
        weights, denom = _job_weights(plan_i, common, None)
        costs = _gpu_pair_costs(plan_i, plan_next, weights)
        total_cost = float(sum(costs[q, mapping[q]] for q in range(size))) / denom
    relabeled = _relabel(plan_next, slot_map)
    return MigrationPlan(
        slot_map=slot_map,
        node_map=None,
        total_cost=total_cost,
        migrated_jobs=_moved(plan_i, relabeled, common),
        placement=relabeled,
        consolidation_violated=_breaks_consolidation(plan_next, relabeled),
    )


def flat_cost_matrix(plan_i: PlacementPlan, plan_next: PlacementPlan, jobs: Mapping | None = None) -> np.ndarray:
    """The ``K x K`` GPU-pair cost matrix over the whole cluster."""
    costs, denom = _flat_units(plan_i, plan_next, jobs)
    return costs / denom


def _flat_units(plan_i, plan_next, jobs):
    _check_pair(plan_i, plan_next, None)
    common = _common_jobs(plan_i, plan_next)
    weights, denom = _job_weights(plan_i, common, jobs)
    return _gpu_pair_costs(plan_i, plan_next, weights), denom


def plan_migration_flat(
    plan_i: PlacementPlan,
    plan_next: PlacementPlan,
    jobs: Mapping | None = None,
) -> MigrationPlan:
    """Single Hungarian over all GPU pairs, ignoring node boundaries.

    Cheaper than :func:`plan_migration` but free to scatter a packed or
    multi-GPU job over several nodes; ``consolidation_violated`` reports
    when the relabeled plan breaks a consolidation the logical plan had.
    """
    costs, denom = _flat_units(plan_i, plan_next, jobs)
    assignment = solve_min_cost(costs)
    return flat_mapping_plan(plan_i, plan_next, assignment.mapping, assignment.total_cost / denom)


def identity_migration(plan: PlacementPlan, previous: PlacementPlan | None = None) -> MigrationPlan:
    """Apply ``plan`` verbatim; migrations are counted against ``previous``."""
    slot_map = tuple(tuple((n, g) for g in range(plan.gpus_per_node)) for n in range(plan.num_nodes))
    moved = frozenset()
    if previous is not None:
        moved = _moved(previous, plan, _common_jobs(previous, plan))
    return MigrationPlan(
        slot_map=slot_map,
        node_map=tuple(range(plan.num_nodes)),
        total_cost=0.0,
        migrated_jobs=moved,
        placement=plan,
    )


def naive_migration_count(plan_i: PlacementPlan, plan_next: PlacementPlan) -> int:
    """Jobs in both rounds whose literal GPU ids differ, with no relabeling."""
    before, after = plan_i.job_slots(), plan_next.job_slots()
    return sum(1 for j in before.keys() & after.keys() if before[j] != after[j])
