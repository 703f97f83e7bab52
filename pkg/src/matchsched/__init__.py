"""Round-based GPU cluster scheduling with matching-based packing and migration."""

from .assignment import FORBIDDEN, Assignment, solve_max_weight_matching, solve_min_cost
from .cluster import ClusterSpec, Job, ParallelismStrategy, PlacementPlan, gpu_set_of, validate_plan
from .errors import (
    BudgetComplete,
    CapacityExceeded,
    Infeasible,
    MissingEntry,
    MissingIsolatedProfile,
    NotDataParallel,
    NotPlaced,
    OutOfMemory,
    SchedulingError,
    ShapeMismatch,
    SimulationError,
    UnknownJob,
)
from .migration import (
    MigrationPlan,
    naive_migration_count,
    node_level_matching,
    plan_migration,
    plan_migration_flat,
)
from .bench import bench_overhead
from .packing import PackingGraph, apply_packing, build_packing_graph, solve_packing, total_weight
from .profiling import (
    ProfileStore,
    linear_scale,
    normalized_pair_throughput,
    pp_candidates,
    profile_with_budget,
    random_search,
    suggest_profiling_plan,
    synthetic_profile,
)
from .scheduling import PolicyKind, RoundDecision, greedy_placement, priority_order, run_round
from .simulator import (
    MetricsReport,
    SimConfig,
    TraceSpec,
    generate_trace,
    noise_sweep,
    run_simulation,
    step_round,
)

__version__ = "0.1.0"
