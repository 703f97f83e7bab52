"""Min-cost assignment and max-weight bipartite matching.

Both solvers share one shortest-augmenting-path Hungarian routine (O(n^2 m)
for an n x m matrix with n <= m) followed by a refinement pass that picks,
among all optimal assignments, the lexicographically smallest row mapping.

Forbidden pairings are marked with ``FORBIDDEN`` (``inf``) rather than a large
finite cost, so an instance with no admissible assignment is reported as
``Infeasible`` instead of silently selecting an impossible pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible

FORBIDDEN = np.inf

# Relative tolerance used to decide whether a reduced cost is zero.
_TIGHT_RTOL = 1e-9


@dataclass(frozen=True)
class Assignment:
    """Result of :func:`solve_min_cost`.

    ``mapping[r]`` is the column matched to row ``r``, or ``None`` when the
    row was matched to padding (only possible when rows > cols).
    """

    mapping: tuple[int | None, ...]
    total_cost: float


def _as_cost_matrix(matrix) -> np.ndarray:
    cost = np.array(matrix, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise ValueError(f"cost matrix must be 2-D and non-empty, got shape {cost.shape}")
    finite = np.isfinite(cost)
    if np.isnan(cost).any() or np.isneginf(cost).any():
        raise ValueError("cost matrix contains NaN or -inf")
    if (cost[finite] < 0).any():
        raise ValueError("cost matrix cells must be non-negative")
    return cost


def _hungarian(cost: np.ndarray):
    """Shortest augmenting path Hungarian for ``n <= m``.

    Returns ``(row_to_col, u, v)`` where ``u``/``v`` are optimal duals with
    ``cost[i, j] - u[i] - v[j] >= 0`` everywhere, equality on matched cells,
    ``v <= 0`` and ``v == 0`` on every unmatched column.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    # p[j]: 1-based row matched to column j (0 = free); column 0 is the root.
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    # Row reduction keeps the duals feasible; rows whose cheapest cell sits in
    # a still-free column are matched immediately.
    row_min = cost.min(axis=1)
    if not np.isfinite(row_min).all():
        raise Infeasible("a row has no admissible column")
    u[1:] = row_min
    pending = []
    taken = np.zeros(m, dtype=bool)
    for i in range(n):
        zero = np.flatnonzero((cost[i] == row_min[i]) & ~taken)
        if zero.size:
            taken[zero[0]] = True
            p[zero[0] + 1] = i + 1
        else:
            pending.append(i + 1)
    for i in pending:
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            if not np.isfinite(delta):
                raise Infeasible("every complete assignment crosses a forbidden cell")
            used_cols = np.flatnonzero(used)
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _lexicographic_refine(cost, row_to_col, u, v):
    """Rotate an optimal assignment into the lexicographically smallest one.

    Optimal assignments are exactly the row-saturating matchings inside the
    tight graph (zero reduced cost) that cover every column with ``v < 0``.
    Rows are fixed in order; for row ``r`` the smallest admissible column is
    chosen, where admissibility is decided by a reverse reachability sweep
    towards the column ``r`` currently holds. Unmatched columns behave as if
    owned by interchangeable zero-cost dummy rows, collapsed into one node.
    """
    n, m = cost.shape
    scale = max(1.0, float(np.max(np.abs(cost[np.isfinite(cost)]), initial=0.0)))
    tol = _TIGHT_RTOL * scale
    with np.errstate(invalid="ignore"):
        tight = (cost - u[:, None] - v[None, :]) <= tol
    optional = np.abs(v) <= tol  # columns that may be left unused
    mate = np.full(m, -1, dtype=np.int64)  # -1: owned by the dummy node
    mate[row_to_col] = np.arange(n)
    row_to_col = row_to_col.copy()
    fixed_col = np.zeros(m, dtype=bool)

    for r in range(n):
        a = row_to_col[r]
        row_tight = np.flatnonzero(tight[r] & ~fixed_col)
        if row_tight.size == 0 or row_tight[0] == a:
            fixed_col[a] = True
            continue
        # Reverse sweep: good[x] means row x can hand its column over along an
        # alternating path that ends by occupying column ``a``.
        good = np.zeros(n, dtype=bool)
        next_col = np.full(n, -1, dtype=np.int64)
        dummy_good = bool(optional[a])
        dummy_next = a if dummy_good else -1
        unfixed = np.ones(n, dtype=bool)
        unfixed[: r + 1] = False
        avail = tight & unfixed[:, None]
        avail[:, fixed_col] = False
        while True:
            exit_col = np.zeros(m, dtype=bool)
            exit_col[a] = True
            owned = mate >= 0
            exit_col[owned] |= good[mate[owned]]
            if dummy_good:
                exit_col[~owned] = True
            exit_col[fixed_col] = False
            reach = avail[:, exit_col]
            newly = reach.any(axis=1) & ~good
            changed = False
            if newly.any():
                cols = np.flatnonzero(exit_col)
                for x in np.flatnonzero(newly):
                    next_col[x] = cols[np.argmax(reach[x])]
                good |= newly
                changed = True
            if not dummy_good:
                cand = np.flatnonzero(optional & exit_col & ~fixed_col)
                if cand.size:
                    dummy_good = True
                    dummy_next = cand[0]
                    changed = True
            if not changed:
                break

        chosen = a
        for c in row_tight:
            if c == a:
                break
            owner = mate[c]
            if (owner >= 0 and good[owner]) or (owner < 0 and dummy_good):
                chosen = c
                break
        if chosen != a:
            # Walk the handover chain from the current owner of ``chosen``.
            owner = mate[chosen]
            row_to_col[r] = chosen
            mate[chosen] = r
            mate[a] = -1
            seen_dummy = False
            while True:
                if owner >= 0:
                    col = next_col[owner]
                    row_to_col[owner] = col
                    prev = mate[col]
                    mate[col] = owner
                else:
                    if seen_dummy:
                        raise AssertionError("handover chain revisited the dummy node")
                    seen_dummy = True
                    col = dummy_next
                    prev = mate[col]
                    mate[col] = -1
                if col == a:
                    break
                owner = prev
        fixed_col[row_to_col[r]] = True
    return row_to_col


def _solve(cost: np.ndarray) -> np.ndarray:
    """Lexicographically smallest optimal row->col array for ``rows <= cols``."""
    row_to_col, u, v = _hungarian(cost)
    return _lexicographic_refine(cost, row_to_col, u, v)


def solve_min_cost(matrix) -> Assignment:
    """Minimum-cost assignment of every row to a distinct column.

    Rectangular inputs behave as if padded to square with zero-cost dummy
    cells. Among equal-cost optima the lexicographically smallest mapping
    (row 0's column first, then row 1's, ...) is returned.

    >>> solve_min_cost([[0, 0], [0, 0]]).mapping
    (0, 1)
    """
    cost = _as_cost_matrix(matrix)
    n, m = cost.shape
    if n > m:
        padded = np.zeros((n, n))
        padded[:, :m] = cost
        cols = _solve(padded)
        mapping = tuple(int(c) if c < m else None for c in cols)
    else:
        mapping = tuple(int(c) for c in _solve(cost))
    total = float(sum(cost[r, c] for r, c in enumerate(mapping) if c is not None))
    return Assignment(mapping, total)


def solve_max_weight_matching(
    left_size: int,
    right_size: int,
    edges,
) -> list[tuple[int, int]]:
    """Maximum-weight bipartite matching where vertices may stay unmatched.

    ``edges`` is an iterable of ``(left, right, weight)`` with ``weight >= 0``;
    pairs not listed cannot be matched. The instance is turned into a min-cost
    assignment with cost ``w_max - w`` on edges, ``FORBIDDEN`` elsewhere, and
    one zero-weight dummy partner per left vertex. Ties resolve to the
    lexicographically smallest left-side mapping, with "unmatched" ranked
    after every real right vertex.

    Returns the matched ``(left, right)`` pairs sorted by left index.
    """
    edges = list(edges)
    if not edges or left_size == 0 or right_size == 0:
        return []
    weights = np.full((left_size, right_size), np.nan)
    for left, right, w in edges:
        if not (0 <= left < left_size and 0 <= right < right_size):
            raise ValueError(f"edge ({left}, {right}) out of range")
        if not w >= 0:
            raise ValueError(f"edge ({left}, {right}) has invalid weight {w!r}")
        weights[left, right] = w
    return max_weight_matching_dense(weights)


def max_weight_matching_dense(weights: np.ndarray) -> list[tuple[int, int]]:
    """Same as :func:`solve_max_weight_matching` for a dense weight matrix.

    ``NaN`` cells are non-edges.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n, m = weights.shape
    has_edge = ~np.isnan(weights)
    if n == 0 or m == 0 or not has_edge.any():
        return []
    if m > n:
        # Each left vertex only needs its n best edges (ties to the lower
        # column): any other partner can be swapped for a free kept column
        # that is at least as heavy and no later, so the lexicographically
        # smallest optimum survives the pruning.
        order = np.argsort(np.where(has_edge, -weights, np.inf), axis=1, kind="stable")[:, :n]
        keep = np.zeros(m, dtype=bool)
        keep[order[has_edge[np.arange(n)[:, None], order]]] = True
        cols = np.flatnonzero(keep)
        if cols.size < m:
            return [(i, int(cols[j])) for i, j in max_weight_matching_dense(weights[:, cols])]
    w_max = float(weights[has_edge].max())
    cost = np.full((n, m + n), FORBIDDEN)
    cost[:, :m][has_edge] = w_max - weights[has_edge]
    cost[:, m:] = w_max
    cols = _solve(cost)
    return [(i, int(c)) for i, c in enumerate(cols) if c < m]
