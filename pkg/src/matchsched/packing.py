"""Packing pending jobs onto the GPUs of placed jobs via max-weight matching.

Placed jobs form the left side, pending jobs the right side; an edge joins
two jobs that use the same number of GPUs and have a profiled pair entry,
weighted by the sum of their normalized throughputs. Since edges never
cross GPU-count classes, each class is matched independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .assignment import max_weight_matching_dense
from .cluster import DEFAULT_MAX_PACK, Job, ParallelismStrategy, PlacementPlan
from .errors import CapacityExceeded, NotPlaced
from .profiling import ProfileStore


class PackingEdge(NamedTuple):
    placed: int
    pending: int
    weight: float
    strategy: ParallelismStrategy | None = None
    strategy_job: int | None = None  # which job the strategy applies to


class PackedPair(NamedTuple):
    placed: int
    pending: int
    strategy: ParallelismStrategy | None = None
    strategy_job: int | None = None
    weight: float = 0.0


@dataclass(frozen=True)
class PackingGraph:
    """Bipartite packing graph stored as a dense weight matrix.

    ``weights[i, j]`` is the edge weight between ``left[i]`` and
    ``right[j]``, NaN when there is no edge. ``choice[i, j]`` holds
    ``(strategy_job, strategy)`` for upgraded edges and ``None`` otherwise.
    """

    left: tuple[int, ...]
    right: tuple[int, ...]
    weights: np.ndarray
    choice: np.ndarray
    gpus_left: np.ndarray
    gpus_right: np.ndarray

    @property
    def edges(self) -> list[PackingEdge]:
        out = []
        for i, j in zip(*np.nonzero(~np.isnan(self.weights))):
            pick = self.choice[i, j]
            strategy_job, strategy = pick if pick is not None else (None, None)
            out.append(PackingEdge(self.left[i], self.right[j], float(self.weights[i, j]),
                                   strategy, strategy_job))
        return out

    def weight(self, placed: int, pending: int) -> float | None:
        w = self.weights[self.left.index(placed), self.right.index(pending)]
        return None if np.isnan(w) else float(w)


def _pair_options(store: ProfileStore, a: str, b: str, gpus: int, optimize: bool):
    """Best ``(weight, side, strategy)`` for models ``a`` (placed) and ``b``.

    ``side`` is 0 when the strategy applies to ``a``, 1 for ``b``. Returns
    ``None`` when no profiled, non-OOM combination exists.
    """
    best = None
    base = store.pair_or_none(a, b, gpus)
    if base is not None:
        best = (base[0] + base[1], None, None)
    if not optimize:
        return best
    for side, (x, y) in enumerate(((a, b), (b, a))):
        for s in store.candidates(x, gpus):
            vals = store.pair_or_none(x, y, gpus, s)
            if vals is None:
                continue
            w = vals[0] + vals[1]
            if best is None or w > best[0]:
                best = (w, side, s)
    return best


def build_packing_graph(
    placed: Sequence[Job],
    pending: Sequence[Job],
    profiles: ProfileStore,
    optimize_strategy: bool = False,
) -> PackingGraph:
    """Edges between equal-GPU-count, packable (placed, pending) job pairs.

    With ``optimize_strategy`` each edge takes the best weight over the
    default configuration and every candidate strategy of either job.
    Raises :class:`MissingIsolatedProfile` for jobs without isolated data.
    """
    for job in list(placed) + list(pending):
        profiles.isolated_throughput(job.model_kind, job.num_gpus)
    left = sorted(placed, key=lambda j: j.id)
    right = sorted(pending, key=lambda j: j.id)
    weights = np.full((len(left), len(right)), np.nan)
    choice = np.full((len(left), len(right)), None, dtype=object)
    gl = np.array([j.num_gpus for j in left], dtype=np.int64)
    gr = np.array([j.num_gpus for j in right], dtype=np.int64)

    # Weights depend only on (model, model, gpus); fill per model block.
    groups_l: dict = {}
    for i, j in enumerate(left):
        if not j.no_pack:
            groups_l.setdefault((j.model_kind, j.num_gpus), []).append(i)
    groups_r: dict = {}
    for i, j in enumerate(right):
        if not j.no_pack:
            groups_r.setdefault((j.model_kind, j.num_gpus), []).append(i)
    for (ma, g), rows in groups_l.items():
        for (mb, g2), cols in groups_r.items():
            if g != g2:
                continue
            best = _pair_options(profiles, ma, mb, g, optimize_strategy)
            if best is None:
                continue
            w, side, s = best
            rr, cc = np.ix_(rows, cols)
            weights[rr, cc] = w
            if s is not None:
                for r in rows:
                    for c in cols:
                        job = left[r].id if side == 0 else right[c].id
                        choice[r, c] = (job, s)
    return PackingGraph(tuple(j.id for j in left), tuple(j.id for j in right),
                        weights, choice, gl, gr)


def solve_packing(graph: PackingGraph) -> list[PackedPair]:
    """Maximum total-weight packing; each job appears in at most one pair."""
    out = []
    for g in np.unique(graph.gpus_left):
        rows = np.flatnonzero(graph.gpus_left == g)
        cols = np.flatnonzero(graph.gpus_right == g)
        if rows.size == 0 or cols.size == 0:
            continue
        block = graph.weights[np.ix_(rows, cols)]
        live_r = ~np.isnan(block).all(axis=1)
        live_c = ~np.isnan(block).all(axis=0)
        if not live_r.any():
            continue
        rows, cols = rows[live_r], cols[live_c]
        block = block[np.ix_(live_r, live_c)]
        for i, j in max_weight_matching_dense(block):
            r, c = rows[i], cols[j]
            pick = graph.choice[r, c]
            strategy_job, strategy = pick if pick is not None else (None, None)
            out.append(PackedPair(graph.left[r], graph.right[c], strategy, strategy_job,
                                  float(graph.weights[r, c])))
    out.sort(key=lambda p: (p.placed, p.pending))
    return out


def apply_packing(
    plan: PlacementPlan,
    matching: Sequence,
    max_pack: int = DEFAULT_MAX_PACK,
) -> PlacementPlan:
    """Place every matched pending job on exactly its partner's GPU slots."""
    slots = plan.job_slots()
    grid = [[set(gpu) for gpu in node] for node in plan.nodes]
    for pair in matching:
        placed, pending = pair[0], pair[1]
        if placed not in slots:
            raise NotPlaced(placed)
        for n, g in sorted(slots[placed]):
            if len(grid[n][g]) >= max_pack:
                raise CapacityExceeded(f"GPU ({n}, {g}) already hosts {max_pack} jobs")
            grid[n][g].add(pending)
    return PlacementPlan.from_lists(grid)


def total_weight(matching: Sequence[PackedPair]) -> float:
    return float(sum(p.weight for p in matching))


__all__ = [
    "PackingEdge",
    "PackedPair",
    "PackingGraph",
    "build_packing_graph",
    "solve_packing",
    "apply_packing",
    "total_weight",
]
