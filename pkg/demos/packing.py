"""Choosing which jobs share GPUs.

Placed jobs form one side of a bipartite graph and pending jobs the other.
An edge joins two jobs with the same GPU count, weighted by the sum of
their normalized throughputs when sharing. A maximum-weight matching picks
the pairs. Letting a job switch parallelism strategy can raise an edge and
change the matching.
"""

from matchsched import build_packing_graph, solve_packing, total_weight
from matchsched.fixtures import strategy_upgrade_packing

spec, plan, placed, pending, store, upgraded = strategy_upgrade_packing()
print("placed:", [(j.id, j.model_kind) for j in placed])
print("pending:", [(j.id, j.model_kind) for j in pending])

for optimize in (False, True):
    graph = build_packing_graph(placed, pending, store, optimize_strategy=optimize)
    matching = solve_packing(graph)
    print(f"\nstrategy search {'on' if optimize else 'off'}")
    for e in graph.edges:
        note = f"  via {e.strategy.key} on job {e.strategy_job}" if e.strategy else ""
        print(f"  edge {e.placed}-{e.pending}: {e.weight:.2f}{note}")
    print("  matching:", [(p.placed, p.pending) for p in matching],
          f"total {total_weight(matching):.2f}")
