"""Round-based cluster simulator, trace generation and run metrics.

Progress is counted in isolated-equivalent seconds: an unpacked job gains
one second of progress per wall-clock second, a packed job gains its
normalized pair throughput per second. Progress is tracked in integer
microseconds so that a finished job's granted progress equals its total
work exactly.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .cluster import (
    DATA_PARALLEL_MODELS,
    DEFAULT_MAX_PACK,
    FINISHED,
    LLM_MODELS,
    MODEL_CATALOG,
    QUEUED,
    RUNNING,
    ClusterSpec,
    Job,
    PlacementPlan,
    to_us,
)
from .errors import SchedulingError, SimulationError
from .migration import naive_migration_count
from .profiling import ProfileStore
from .scheduling import MIGRATION_KINDS, PolicyKind, RoundDecision, run_round

TRACE_SCHEMA = "tesserae-trace/1"
RESULTS_SCHEMA = "tesserae-results/1"

GPU_CHOICES = (1, 2, 4, 8)

# (probability, low hours, high hours); durations are log-uniform in a class.
SHOCKWAVE_CLASSES = {
    "small": (0.72, 0.2, 1.0),
    "medium": (0.20, 1.0, 4.0),
    "large": (0.05, 4.0, 10.0),
    "xlarge": (0.03, 10.0, 20.0),
}
SHOCKWAVE_GPU_MIX = (0.6, 0.3, 0.09, 0.01)
GAVEL_GPU_MIX = (0.70, 0.10, 0.15, 0.05)
# Gavel-style durations: 10**U[1.5, 3] minutes w.p. 0.8, else 10**U[3, 4].
GAVEL_SHORT = (0.8, 1.5, 3.0)
GAVEL_LONG = (0.2, 3.0, 4.0)


@dataclass(frozen=True)
class TraceSpec:
    style: str = "shockwave"
    num_jobs: int = 120
    arrival_rate: float = 80.0  # jobs per hour
    rng_seed: int = 0
    llm_fraction: float | None = None  # None: uniform over the whole catalog
    no_pack_fraction: float = 0.0

    def __post_init__(self):
        if self.style not in ("shockwave", "gavel"):
            raise ValueError(f"unknown trace style {self.style!r}")
        if self.num_jobs < 0:
            raise ValueError("num_jobs must be >= 0")
        if not self.arrival_rate > 0:
            raise ValueError("arrival_rate must be > 0")
        if self.llm_fraction is not None and not 0 <= self.llm_fraction <= 1:
            raise ValueError("llm_fraction must lie in [0, 1]")
        if not 0 <= self.no_pack_fraction <= 1:
            raise ValueError("no_pack_fraction must lie in [0, 1]")


def _log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def generate_trace(spec: TraceSpec) -> list[Job]:
    """Poisson arrivals with per-style GPU-count and duration distributions."""
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.num_jobs
    gaps = rng.exponential(3600.0 / spec.arrival_rate, size=n)
    arrivals = np.cumsum(gaps)
    if spec.style == "shockwave":
        gpus = rng.choice(GPU_CHOICES, size=n, p=SHOCKWAVE_GPU_MIX)
        classes = list(SHOCKWAVE_CLASSES.values())
        cls = rng.choice(len(classes), size=n, p=[c[0] for c in classes])
        hours = np.empty(n)
        for k, (_, lo, hi) in enumerate(classes):
            mask = cls == k
            hours[mask] = _log_uniform(rng, lo, hi, mask.sum())
        work = hours * 3600.0
    else:
        gpus = rng.choice(GPU_CHOICES, size=n, p=GAVEL_GPU_MIX)
        short = rng.random(n) < GAVEL_SHORT[0]
        exponent = np.where(short, rng.uniform(*GAVEL_SHORT[1:], size=n),
                            rng.uniform(*GAVEL_LONG[1:], size=n))
        work = 10.0 ** exponent * 60.0
    if spec.llm_fraction is None:
        models = rng.choice(len(MODEL_CATALOG), size=n)
        kinds = [MODEL_CATALOG[m] for m in models]
    else:
        llm = rng.random(n) < spec.llm_fraction
        dp_pick = rng.choice(len(DATA_PARALLEL_MODELS), size=n)
        llm_pick = rng.choice(len(LLM_MODELS), size=n)
        kinds = [LLM_MODELS[b] if is_l else DATA_PARALLEL_MODELS[a]
                 for is_l, a, b in zip(llm, dp_pick, llm_pick)]
    no_pack = rng.random(n) < spec.no_pack_fraction
    return [
        Job(id=i, arrival_time=round(float(arrivals[i]), 3), num_gpus=int(gpus[i]),
            model_kind=kinds[i], total_work=round(float(work[i]), 3), no_pack=bool(no_pack[i]))
        for i in range(n)
    ]


def trace_to_json(jobs: Sequence[Job], spec: TraceSpec | None = None) -> dict:
    doc = {"schema": TRACE_SCHEMA}
    if spec is not None:
        doc["spec"] = asdict(spec)
    doc["jobs"] = [
        {"id": j.id, "arrival_s": j.arrival_time, "num_gpus": j.num_gpus,
         "model_kind": j.model_kind, "total_work_s": j.total_work, "no_pack": j.no_pack}
        for j in jobs
    ]
    return doc


def trace_from_json(doc) -> list[Job]:
    if doc.get("schema") != TRACE_SCHEMA:
        raise ValueError(f"expected schema {TRACE_SCHEMA!r}, got {doc.get('schema')!r}")
    jobs = [Job(id=int(e["id"]), arrival_time=float(e["arrival_s"]), num_gpus=int(e["num_gpus"]),
                model_kind=str(e["model_kind"]), total_work=float(e["total_work_s"]),
                no_pack=bool(e.get("no_pack", False)))
            for e in doc["jobs"]]
    if len({j.id for j in jobs}) != len(jobs):
        raise ValueError("duplicate job ids in trace")
    return jobs


def dumps(doc) -> str:
    """Canonical JSON text used for every file this package writes."""
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_trace(path, jobs: Sequence[Job], spec: TraceSpec | None = None) -> None:
    with open(path, "w") as f:
        f.write(dumps(trace_to_json(jobs, spec)))


def load_trace(path) -> list[Job]:
    with open(path) as f:
        return trace_from_json(json.load(f))


@dataclass(frozen=True)
class SimConfig:
    num_gpus: int = 32
    gpus_per_node: int = 4
    round_seconds: float = 360.0
    migration_penalty_seconds: float = 30.0
    max_pack: int = DEFAULT_MAX_PACK
    rng_seed: int = 0
    policy: str = "tiresias"
    packing_enabled: bool = True
    migration_kind: str = "tesserae"
    profile_noise: float = 0.0
    optimize_strategy: bool = False
    record_latency: bool = False
    max_rounds: int = 1_000_000

    def __post_init__(self):
        if not self.round_seconds > 0:
            raise ValueError("round_seconds must be > 0")
        if self.migration_penalty_seconds < 0:
            raise ValueError("migration_penalty_seconds must be >= 0")
        if not 0 <= self.profile_noise <= 1:
            raise ValueError("profile_noise must lie in [0, 1]")
        if self.migration_kind not in MIGRATION_KINDS:
            raise ValueError(f"unknown migration kind {self.migration_kind!r}")
        PolicyKind.parse(self.policy)
        ClusterSpec.from_total(self.num_gpus, self.gpus_per_node)

    @property
    def cluster(self) -> ClusterSpec:
        return ClusterSpec.from_total(self.num_gpus, self.gpus_per_node)


@dataclass
class SimState:
    spec: ClusterSpec
    jobs: dict[int, Job]
    profiles: ProfileStore | None  # what the scheduler believes
    true_profiles: ProfileStore | None  # what execution follows
    max_pack: int = DEFAULT_MAX_PACK
    optimize_strategy: bool = False
    now: float = 0.0
    round_index: int = 0
    previous_plan: PlacementPlan | None = None
    previous_logical: PlacementPlan | None = None  # what a naive mapper would have run
    contention_time: dict = field(default_factory=dict)  # job -> sum(contention * dt)
    active_time: dict = field(default_factory=dict)  # job -> sum(dt)
    migration_total: int = 0
    naive_total: int = 0
    latencies: list = field(default_factory=list)
    rounds: list = field(default_factory=list)

    @property
    def active(self) -> list[Job]:
        return [j for j in self.jobs.values()
                if j.state != FINISHED and j.arrival_time <= self.now]


def _packed_rate(state: SimState, job: Job, partner: Job, pair) -> float:
    store = state.true_profiles
    if pair.strategy is None:
        return store.pair(job.model_kind, partner.model_kind, job.num_gpus)[0]
    if pair.strategy_job == job.id:
        return store.pair(job.model_kind, partner.model_kind, job.num_gpus, pair.strategy)[0]
    return store.pair(partner.model_kind, job.model_kind, job.num_gpus, pair.strategy)[1]


def step_round(state: SimState, decision: RoundDecision, config: SimConfig) -> SimState:
    """Advance every scheduled job through one round and move the clock."""
    start = state.now
    length = config.round_seconds
    round_us = to_us(length)
    penalty_us = min(to_us(config.migration_penalty_seconds), round_us)

    rates: dict[int, float] = {}
    for pair in decision.packed:
        a, b = state.jobs[pair.placed], state.jobs[pair.pending]
        rates[a.id] = _packed_rate(state, a, b, pair)
        rates[b.id] = _packed_rate(state, b, a, pair)

    active = state.active
    demand = sum(j.num_gpus for j in active)
    contention = demand / state.spec.total_gpus
    for j in active:
        state.contention_time[j.id] = state.contention_time.get(j.id, 0.0) + contention * length
        state.active_time[j.id] = state.active_time.get(j.id, 0.0) + length

    migrated = decision.migration.migrated_jobs
    for job_id in sorted(decision.placed):
        job = state.jobs[job_id]
        f = rates.get(job_id, 1.0)
        lost = penalty_us if job_id in migrated else 0
        if job_id in migrated:
            job.migrations += 1
        work_us = round_us - lost
        gain = int(work_us * f)
        remaining = job.remaining_us
        if gain >= remaining:
            busy_us = lost + (remaining / f if f > 0 else 0)
            job.progress_us = job.total_work_us
            job.state = FINISHED
            job.completion_time = start + busy_us / 1e6
            job.attained_service += job.num_gpus * busy_us / 1e6
        else:
            job.progress_us += gain
            job.state = RUNNING
            job.attained_service += job.num_gpus * length
    for j in active:
        if j.id not in decision.placed and j.state == RUNNING:
            j.state = QUEUED

    state.migration_total += len(migrated)
    state.latencies.append(decision.decision_latency)
    state.previous_plan = decision.plan
    state.previous_logical = decision.logical
    state.now = start + length
    state.round_index += 1
    return state


def _round_summary(index: int, now: float, decision: RoundDecision) -> dict:
    return {
        "index": index,
        "time_s": now,
        "placed": sorted(decision.placed),
        "packed": [[p.placed, p.pending, None if p.strategy is None else p.strategy.key]
                   for p in decision.packed],
        "pending": list(decision.pending),
        "migrated": sorted(decision.migration.migrated_jobs),
        "flat_fallback": decision.flat_fallback,
    }


@dataclass
class JobRecord:
    id: int
    arrival_s: float
    completion_s: float
    num_gpus: int
    total_work_s: float
    granted_us: int
    migrations: int
    ftf: float

    @property
    def jct(self) -> float:
        return self.completion_s - self.arrival_s


@dataclass
class MetricsReport:
    avg_jct: float
    makespan: float
    ftf_ratios: list[float]
    migration_total: int
    naive_migration_total: int
    decision_latency: list[float]
    jobs: list[JobRecord]
    rounds: list[dict]
    config: dict

    @property
    def worst_ftf(self) -> float:
        return max(self.ftf_ratios, default=0.0)

    @property
    def mean_decision_ms(self) -> float:
        return 1e3 * float(np.mean(self.decision_latency)) if self.decision_latency else 0.0

    def to_json(self, include_latency: bool = False) -> dict:
        doc = {
            "schema": RESULTS_SCHEMA,
            "config": self.config,
            "metrics": {
                "avg_jct_s": self.avg_jct,
                "makespan_s": self.makespan,
                "migration_total": self.migration_total,
                "naive_migration_total": self.naive_migration_total,
                "worst_ftf": self.worst_ftf,
                "num_rounds": len(self.rounds),
            },
            "jobs": [
                {"id": r.id, "arrival_s": r.arrival_s, "completion_s": r.completion_s,
                 "num_gpus": r.num_gpus, "migrations": r.migrations, "ftf": r.ftf}
                for r in self.jobs
            ],
            "rounds": self.rounds,
        }
        if include_latency:
            doc["decision_latency_s"] = self.decision_latency
        return doc


def _check_placeable(jobs, spec: ClusterSpec):
    for j in jobs:
        g, k = j.num_gpus, spec.gpus_per_node
        if g > spec.total_gpus or (g > k and g % k):
            raise SimulationError(f"job {j.id} needs {g} GPUs, which this cluster cannot host")


def run_simulation(trace: Sequence[Job], profiles: ProfileStore | None, config: SimConfig,
                   extra_config: dict | None = None) -> MetricsReport:
    """Simulate ``trace`` to completion and collect metrics.

    The scheduler sees ``profiles`` perturbed by ``config.profile_noise``;
    job progress always follows the unperturbed values.
    """
    spec = config.cluster
    jobs = {j.id: copy.copy(j) for j in trace}
    _check_placeable(jobs.values(), spec)
    if config.packing_enabled and profiles is None:
        raise SimulationError("packing needs a profile store")
    seen = profiles
    if profiles is not None and config.profile_noise > 0:
        seen = profiles.with_noise(config.profile_noise, config.rng_seed)
    state = SimState(spec, jobs, seen, profiles, config.max_pack, config.optimize_strategy)
    policy = PolicyKind.parse(config.policy)
    round_len = config.round_seconds
    arrivals = sorted(j.arrival_time for j in jobs.values())

    while any(j.state != FINISHED for j in jobs.values()):
        if state.round_index >= config.max_rounds:
            raise SimulationError("round limit reached", state.round_index)
        if not state.active:
            # Skip idle rounds up to the boundary at or after the next arrival.
            nxt = min(j.arrival_time for j in jobs.values() if j.state != FINISHED)
            state.now = max(state.now, math.ceil(nxt / round_len) * round_len)
            state.previous_plan = state.previous_logical = None
            continue
        try:
            decision = run_round(state, policy, config.packing_enabled, config.migration_kind)
        except SchedulingError as exc:
            raise SimulationError(f"round {state.round_index}: {exc}", state.round_index) from exc
        if state.previous_logical is not None:
            state.naive_total += naive_migration_count(state.previous_logical, decision.logical)
        state.rounds.append(_round_summary(state.round_index, state.now, decision))
        step_round(state, decision, config)

    records = []
    for j in sorted(jobs.values(), key=lambda x: x.id):
        active = state.active_time.get(j.id, 0.0)
        avg_contention = state.contention_time.get(j.id, 0.0) / active if active else 1.0
        fair = j.total_work * max(1.0, avg_contention)
        jct = j.completion_time - j.arrival_time
        rho = jct / fair if fair > 0 else 1.0
        records.append(JobRecord(j.id, j.arrival_time, j.completion_time, j.num_gpus,
                                 j.total_work, j.progress_us, j.migrations, rho))
    avg_jct = float(np.mean([r.jct for r in records])) if records else 0.0
    makespan = max((r.completion_s for r in records), default=0.0)
    cfg = asdict(config)
    if extra_config:
        cfg.update(extra_config)
    return MetricsReport(
        avg_jct=avg_jct,
        makespan=makespan,
        ftf_ratios=[r.ftf for r in records],
        migration_total=state.migration_total,
        naive_migration_total=state.naive_total,
        decision_latency=list(state.latencies),
        jobs=records,
        rounds=state.rounds,
        config=cfg,
    )


def save_results(path, report: MetricsReport, include_latency: bool = False) -> None:
    with open(path, "w") as f:
        f.write(dumps(report.to_json(include_latency)))


def noise_sweep(
    trace: Sequence[Job],
    profiles: ProfileStore,
    config: SimConfig,
    levels: Sequence[float] = (0.0, 0.2, 0.5, 1.0),
) -> list[dict]:
    """Average JCT under increasingly noisy profiles, relative to the first level."""
    rows = []
    for n_p in levels:
        cfg = SimConfig(**{**asdict(config), "profile_noise": n_p})
        report = run_simulation(trace, profiles, cfg)
        rows.append({"noise": n_p, "avg_jct_s": report.avg_jct, "makespan_s": report.makespan})
    base = rows[0]["avg_jct_s"] if rows else 0.0
    for row in rows:
        row["jct_ratio"] = row["avg_jct_s"] / base if base else float("nan")
    return rows


__all__ = [
    "TRACE_SCHEMA",
    "RESULTS_SCHEMA",
    "TraceSpec",
    "generate_trace",
    "trace_to_json",
    "trace_from_json",
    "save_trace",
    "load_trace",
    "dumps",
    "SimConfig",
    "SimState",
    "step_round",
    "JobRecord",
    "MetricsReport",
    "run_simulation",
    "save_results",
    "noise_sweep",
]
