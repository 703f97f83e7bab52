"""Priority policies and the per-round decision pipeline.

A round sorts the active jobs by policy priority, places as many as possible
without sharing, optionally packs pending jobs onto placed ones, and finally
maps the logical plan onto physical GPUs to limit migrations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .cluster import DEFAULT_MAX_PACK, ClusterSpec, Job, PlacementPlan
from .migration import (
    MigrationPlan,
    identity_migration,
    plan_migration,
    plan_migration_flat,
)
from .packing import PackedPair, apply_packing, build_packing_graph, solve_packing

FIFO = "fifo"
LAS = "tiresias_las"
FTF = "ftf"

_ALIASES = {"fifo": FIFO, "tiresias": LAS, "tiresias_las": LAS, "las": LAS, "ftf": FTF}

MIGRATION_KINDS = ("tesserae", "flat", "naive")


@dataclass(frozen=True)
class PolicyKind:
    """A priority policy.

    ``las_thresholds`` switches 2D-LAS to discretized queues: jobs whose
    attained service (GPU-seconds) falls below ``thresholds[0]`` form the
    top queue, and so on; within a queue jobs run in arrival order.
    """

    kind: str
    las_thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", _ALIASES[self.kind])
        except KeyError:
            raise ValueError(f"unknown policy {self.kind!r}; choose from {sorted(_ALIASES)}") from None

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        return value if isinstance(value, PolicyKind) else cls(value)


def ftf_estimate(job: Job, now: float, total_gpus: int, demand: int) -> float:
    """Estimated finish-time-fairness ratio of ``job`` if it ran alone from now.

    Shared completion is estimated as time waited so far plus the remaining
    isolated work; fair completion as the work stretched by the cluster's
    over-subscription (never below 1).
    """
    contention = max(1.0, demand / total_gpus) if total_gpus > 0 else 1.0
    shared = (now - job.arrival_time) + job.remaining_us / 1e6
    fair = max(job.total_work, 1e-9) * contention
    return shared / fair


def priority_order(
    policy,
    active: Sequence[Job],
    now: float,
    total_gpus: int | None = None,
) -> list[Job]:
    """Sort ``active`` by policy priority, highest first; ties by job id."""
    policy = PolicyKind.parse(policy)
    if policy.kind == FIFO:
        return sorted(active, key=lambda j: (j.arrival_time, j.id))
    if policy.kind == LAS:
        if policy.las_thresholds:
            limits = sorted(policy.las_thresholds)

            def queue(j):
                return sum(1 for t in limits if j.attained_service >= t)

            return sorted(active, key=lambda j: (queue(j), j.arrival_time, j.id))
        return sorted(active, key=lambda j: (j.attained_service, j.id))
    demand = sum(j.num_gpus for j in active)
    supply = total_gpus if total_gpus is not None else demand
    rho = {j.id: ftf_estimate(j, now, supply, demand) for j in active}
    return sorted(active, key=lambda j: (-rho[j.id], j.id))


def greedy_placement(ordered: Sequence[Job], spec: ClusterSpec) -> tuple[PlacementPlan, list[Job]]:
    """Place jobs in order on an empty cluster, one job per GPU.

    A job that fits on one node goes to the node with the fewest free GPUs
    that still suffice (lowest node id on ties) and takes its lowest free
    GPU ids. Larger jobs need whole nodes and take the lowest-id fully free
    ones. Jobs that cannot be placed become pending; the pass continues.
    """
    k = spec.gpus_per_node
    free = [list(range(k)) for _ in range(spec.num_nodes)]
    free_total = spec.total_gpus
    slots: dict[int, list] = {}
    pending = []
    for job in ordered:
        g = job.num_gpus
        chosen = None
        if free_total >= g:
            if g <= k:
                best = None
                for n, f in enumerate(free):
                    if len(f) >= g and (best is None or len(f) < len(free[best])):
                        best = n
                if best is not None:
                    chosen = [(best, x) for x in free[best][:g]]
                    free[best] = free[best][g:]
            elif g % k == 0:
                whole = [n for n, f in enumerate(free) if len(f) == k][: g // k]
                if len(whole) == g // k:
                    chosen = [(n, x) for n in whole for x in free[n]]
                    for n in whole:
                        free[n] = []
        if chosen is None:
            pending.append(job)
        else:
            slots[job.id] = chosen
            free_total -= g
    return PlacementPlan.from_assignments(spec, slots), pending


@dataclass
class RoundInput:
    """What one round decision needs to know about the simulation."""

    spec: ClusterSpec
    active: list[Job]
    now: float = 0.0
    previous_plan: PlacementPlan | None = None
    profiles: object = None
    max_pack: int = DEFAULT_MAX_PACK
    optimize_strategy: bool = False


@dataclass
class RoundDecision:
    placed: dict[int, frozenset]
    packed: list[PackedPair]
    pending: list[int]
    migration: MigrationPlan
    decision_latency: float
    phases: dict[str, float] = field(default_factory=dict)
    flat_fallback: bool = False
    logical: PlacementPlan | None = None  # the plan before mapping onto physical GPUs

    @property
    def plan(self) -> PlacementPlan:
        return self.migration.placement

    @property
    def strategies(self) -> dict:
        return {p.strategy_job: p.strategy for p in self.packed if p.strategy is not None}


def run_round(
    state,
    policy,
    packing_enabled: bool = True,
    migration_kind: str = "tesserae",
) -> RoundDecision:
    """One full round decision: sort, place, pack, then map onto physical GPUs.

    ``state`` needs ``spec``, ``active``, ``now``, ``previous_plan``,
    ``profiles``, ``max_pack`` and ``optimize_strategy`` attributes (see
    :class:`RoundInput`).
    """
    if migration_kind not in MIGRATION_KINDS:
        raise ValueError(f"unknown migration kind {migration_kind!r}")
    t0 = time.perf_counter()
    ordered = priority_order(policy, state.active, state.now, state.spec.total_gpus)
    logical, pending_jobs = greedy_placement(ordered, state.spec)
    t1 = time.perf_counter()

    packed: list[PackedPair] = []
    if packing_enabled and pending_jobs and state.profiles is not None:
        placed_ids = logical.jobs()
        placed_jobs = [j for j in state.active if j.id in placed_ids]
        graph = build_packing_graph(placed_jobs, pending_jobs, state.profiles,
                                    state.optimize_strategy)
        packed = solve_packing(graph)
        logical = apply_packing(logical, packed, state.max_pack)
    t2 = time.perf_counter()

    prev = state.previous_plan
    fallback = False
    if prev is None:
        migration = identity_migration(logical)
    elif migration_kind == "naive":
        migration = identity_migration(logical, prev)
    else:
        gpus = {j.id: j.num_gpus for j in state.active}
        prev_slots = prev.job_slots()
        for job in prev_slots.keys() - gpus.keys():
            gpus[job] = len(prev_slots[job])
        if migration_kind == "tesserae":
            migration = plan_migration(prev, logical, state.spec, gpus)
        else:
            migration = plan_migration_flat(prev, logical, gpus)
            if migration.consolidation_violated:
                migration = identity_migration(logical, prev)
                fallback = True
    t3 = time.perf_counter()

    packed_ids = {p.pending for p in packed}
    pending = sorted(j.id for j in pending_jobs if j.id not in packed_ids)
    placed = migration.placement.job_slots()
    return RoundDecision(
        placed=placed,
        packed=packed,
        pending=pending,
        migration=migration,
        decision_latency=t3 - t0,
        phases={"scheduling": t1 - t0, "packing": t2 - t1, "migration": t3 - t2},
        flat_fallback=fallback,
        logical=logical,
    )


__all__ = [
    "FIFO",
    "LAS",
    "FTF",
    "PolicyKind",
    "priority_order",
    "ftf_estimate",
    "greedy_placement",
    "RoundInput",
    "RoundDecision",
    "run_round",
]
