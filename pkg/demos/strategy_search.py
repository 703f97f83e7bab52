"""Profiling a few pipeline splits instead of all of them.

A 32-layer model on 8 GPUs has many near-even pipeline splits. A Gaussian
process with expected improvement proposes which split to measure next;
after a small budget it usually finds a better split than random picks do.
"""

import numpy as np

from matchsched import pp_candidates, profile_with_budget, random_search

candidates = pp_candidates(32, 8, limit=20)
target = np.array([3, 3, 3, 4, 4, 5, 5, 5.0])


def measure(strategy):
    # Stand-in for a real profiling run: best near ``target``.
    return 1.6 - 0.05 * float(((np.array(strategy.layers) - target) ** 2).sum())


print(len(candidates), "candidate splits, e.g.", candidates[0].key, candidates[-1].key)
for budget in (4, 8, 12):
    guided = [profile_with_budget(candidates, measure, budget, s)[2] for s in range(30)]
    rand = [random_search(candidates, measure, budget, s)[2] for s in range(30)]
    print(f"budget {budget:2d}: guided {np.mean(guided):.3f}  random {np.mean(rand):.3f}")

observed, best, value = profile_with_budget(candidates, measure, 8, rng_seed=0)
print("\nmeasured order:", [s.key for s, _ in observed])
print("best found:", best.key, round(value, 3))
