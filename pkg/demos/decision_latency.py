"""How long one round decision takes as the active-job count grows.

Times ordering, placement, packing and relabeling on a 256-GPU cluster.
"""

from matchsched import bench_overhead

print(f"{'jobs':>6} {'total ms':>9} {'sched ms':>9} {'pack ms':>9} {'migr ms':>9} {'packed':>7}")
for row in bench_overhead(256, 4, (64, 512, 1024, 2048, 3000), seed=0, repeats=3):
    print(f"{row['jobs']:6d} {1e3 * row['total_s']:9.1f} {1e3 * row['scheduling_s']:9.1f} "
          f"{1e3 * row['packing_s']:9.1f} {1e3 * row['migration_s']:9.1f} {row['packed']:7d}")
