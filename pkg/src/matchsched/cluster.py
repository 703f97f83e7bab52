"""Jobs, cluster shape, placement plans and parallelism strategies."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import NotPlaced, ShapeMismatch, UnknownJob

DATA_PARALLEL_MODELS = ("ResNet-50", "VGG-19", "DCGAN", "PointNet")
LLM_MODELS = ("GPT3-Medium", "GPT3-XL", "GPT3-3B")
MODEL_CATALOG = DATA_PARALLEL_MODELS + LLM_MODELS

DEFAULT_MAX_PACK = 2

QUEUED = "queued"
RUNNING = "running"
FINISHED = "finished"

# Simulator progress is tracked in integer microseconds so completion is exact.
_US = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * _US))


def is_llm(model_kind: str) -> bool:
    return model_kind in LLM_MODELS


@dataclass
class Job:
    """A training job together with its simulated runtime state."""

    id: int
    arrival_time: float
    num_gpus: int
    model_kind: str
    total_work: float
    no_pack: bool = False
    state: str = QUEUED
    attained_service: float = 0.0
    progress_us: int = 0
    completion_time: float | None = None
    migrations: int = 0

    def __post_init__(self):
        if self.num_gpus < 1:
            raise ValueError(f"job {self.id}: num_gpus must be >= 1")
        if self.total_work < 0:
            raise ValueError(f"job {self.id}: total_work must be >= 0")

    @property
    def total_work_us(self) -> int:
        return to_us(self.total_work)

    @property
    def progress(self) -> float:
        """Isolated-equivalent seconds completed."""
        return self.progress_us / _US

    @property
    def remaining_us(self) -> int:
        return self.total_work_us - self.progress_us

    @property
    def finished(self) -> bool:
        return self.state == FINISHED


@dataclass(frozen=True)
class ClusterSpec:
    num_nodes: int
    gpus_per_node: int

    def __post_init__(self):
        if self.num_nodes < 1 or self.gpus_per_node < 1:
            raise ValueError("a cluster needs at least one node and one GPU per node")

    @property
    def total_gpus(self) -> int:
        return self.num_nodes * self.gpus_per_node

    @classmethod
    def from_total(cls, total_gpus: int, gpus_per_node: int) -> "ClusterSpec":
        if total_gpus % gpus_per_node:
            raise ValueError(f"{total_gpus} GPUs do not split into nodes of {gpus_per_node}")
        return cls(total_gpus // gpus_per_node, gpus_per_node)


@dataclass(frozen=True)
class ParallelismStrategy:
    """DP, TP, or PP with the number of layers held by each pipeline stage."""

    variant: str
    layers: tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant not in ("DP", "TP", "PP"):
            raise ValueError(f"unknown parallelism variant {self.variant!r}")
        object.__setattr__(self, "layers", tuple(int(x) for x in self.layers))
        if self.variant == "PP":
            if not self.layers or min(self.layers) < 1:
                raise ValueError("PP needs at least one stage and >= 1 layer per stage")
        elif self.layers:
            raise ValueError(f"{self.variant} takes no layer split")

    @property
    def key(self) -> str:
        if self.variant == "PP":
            return "PP:" + ",".join(map(str, self.layers))
        return self.variant

    @classmethod
    def from_key(cls, key: str) -> "ParallelismStrategy":
        if key.startswith("PP:"):
            return cls("PP", tuple(int(x) for x in key[3:].split(",")))
        return cls(key)

    def to_dict(self) -> dict:
        if self.variant == "PP":
            return {"variant": "PP", "layers": list(self.layers)}
        return {"variant": self.variant}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParallelismStrategy":
        return cls(data["variant"], tuple(data.get("layers", ())))

    def __str__(self):
        return self.key


Slot = tuple[int, int]


@dataclass(frozen=True)
class PlacementPlan:
    """Job sets per GPU slot, ``nodes[node][gpu]``."""

    nodes: tuple[tuple[frozenset[int], ...], ...]

    def __post_init__(self):
        widths = {len(node) for node in self.nodes}
        if len(widths) > 1:
            raise ShapeMismatch("all nodes of a plan must have the same GPU count")

    @classmethod
    def empty(cls, spec: ClusterSpec) -> "PlacementPlan":
        node = tuple(frozenset() for _ in range(spec.gpus_per_node))
        return cls(tuple(node for _ in range(spec.num_nodes)))

    @classmethod
    def from_lists(cls, nodes: Iterable[Iterable[Iterable[int]]]) -> "PlacementPlan":
        """Build from nested lists, e.g. ``[[[1], [2, 5], [], [3]]]``."""
        return cls(tuple(tuple(frozenset(gpu) for gpu in node) for node in nodes))

    @classmethod
    def from_assignments(cls, spec: ClusterSpec, slots: Mapping[int, Iterable[Slot]]) -> "PlacementPlan":
        grid = [[set() for _ in range(spec.gpus_per_node)] for _ in range(spec.num_nodes)]
        for job, job_slots in slots.items():
            for node, gpu in job_slots:
                grid[node][gpu].add(job)
        return cls.from_lists(grid)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def gpus_per_node(self) -> int:
        return len(self.nodes[0]) if self.nodes else 0

    def to_lists(self) -> list[list[list[int]]]:
        return [[sorted(gpu) for gpu in node] for node in self.nodes]

    def jobs(self) -> set[int]:
        return {j for node in self.nodes for gpu in node for j in gpu}

    def job_slots(self) -> dict[int, frozenset[Slot]]:
        out: dict[int, set] = defaultdict(set)
        for n, node in enumerate(self.nodes):
            for g, gpu in enumerate(node):
                for j in gpu:
                    out[j].add((n, g))
        return {j: frozenset(s) for j, s in out.items()}

    def without(self, job_ids: Iterable[int]) -> "PlacementPlan":
        drop = set(job_ids)
        return PlacementPlan(tuple(tuple(gpu - drop for gpu in node) for node in self.nodes))

    def restricted_to(self, job_ids: Iterable[int]) -> "PlacementPlan":
        keep = frozenset(job_ids)
        return PlacementPlan(tuple(tuple(gpu & keep for gpu in node) for node in self.nodes))

    def with_job(self, job: int, slots: Iterable[Slot]) -> "PlacementPlan":
        grid = [list(node) for node in self.nodes]
        for n, g in slots:
            grid[n][g] = grid[n][g] | {job}
        return PlacementPlan(tuple(tuple(node) for node in grid))

    def check_shape(self, spec: ClusterSpec) -> None:
        if self.num_nodes != spec.num_nodes or self.gpus_per_node != spec.gpus_per_node:
            raise ShapeMismatch(
                f"plan is {self.num_nodes}x{self.gpus_per_node}, "
                f"cluster is {spec.num_nodes}x{spec.gpus_per_node}"
            )


@dataclass(frozen=True)
class Violation:
    kind: str  # "capacity" | "consolidation" | "gpu_count" | "shape"
    job: int | None
    location: tuple = field(default=())
    message: str = ""


def _num_gpus(jobs: Mapping, job_id: int) -> int:
    try:
        entry = jobs[job_id]
    except KeyError:
        raise UnknownJob(job_id) from None
    return entry if isinstance(entry, int) else entry.num_gpus


def validate_plan(
    plan: PlacementPlan,
    spec: ClusterSpec,
    jobs: Mapping,
    max_pack: int = DEFAULT_MAX_PACK,
) -> list[Violation]:
    """Return every violated placement invariant; an empty list means ok.

    ``jobs`` maps job id to a :class:`Job` or directly to its GPU count.
    """
    violations = []
    if plan.num_nodes != spec.num_nodes or plan.gpus_per_node != spec.gpus_per_node:
        return [Violation("shape", None, (plan.num_nodes, plan.gpus_per_node),
                          "plan shape differs from the cluster")]
    for n, node in enumerate(plan.nodes):
        for g, gpu in enumerate(node):
            if len(gpu) > max_pack:
                violations.append(Violation(
                    "capacity", None, (n, g),
                    f"GPU ({n}, {g}) hosts {len(gpu)} jobs, limit {max_pack}"))
    per_node = spec.gpus_per_node
    for job, slots in sorted(plan.job_slots().items()):
        want = _num_gpus(jobs, job)
        if len(slots) != want:
            violations.append(Violation(
                "gpu_count", job, tuple(sorted(slots)),
                f"job {job} needs {want} GPUs but holds {len(slots)}"))
        nodes_used: dict[int, int] = defaultdict(int)
        for n, _ in slots:
            nodes_used[n] += 1
        if want <= per_node:
            consolidated = len(nodes_used) == 1
        else:
            consolidated = (
                want % per_node == 0
                and len(nodes_used) == want // per_node
                and all(c == per_node for c in nodes_used.values())
            )
        if not consolidated:
            violations.append(Violation(
                "consolidation", job, tuple(sorted(nodes_used)),
                f"job {job} spans nodes {sorted(nodes_used)}"))
    return violations


def gpu_set_of(plan: PlacementPlan, job: int) -> frozenset[Slot]:
    """Physical ``(node, gpu)`` slots hosting ``job``."""
    slots = {(n, g) for n, node in enumerate(plan.nodes)
             for g, gpu in enumerate(node) if job in gpu}
    if not slots:
        raise NotPlaced(job)
    return frozenset(slots)
