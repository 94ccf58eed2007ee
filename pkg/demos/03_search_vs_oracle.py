"""Compare the randomized local search with exhaustive enumeration."""

import numpy as np

from apalloc.model import InitMode, OptimizerConfig, Problem
from apalloc.optimizer import brute_force_oracle, local_search

rng = np.random.default_rng(5)
ratios = []
for k in range(100):
    n, l = rng.integers(2, 7), rng.integers(2, 5)
    q = rng.uniform(0.01, 0.03, (n, l)) * (rng.random((n, l)) < 0.7)
    elephant = rng.random(n) < 0.4
    rate = np.where(elephant, rng.uniform(1, 3, n), rng.uniform(0.1, 0.5, n))
    ap_elephant = rng.random(l) < 0.5
    capacity = np.where(ap_elephant, rng.uniform(2, 5, l), rng.uniform(0.2, 0.8, l))
    p = Problem(q, rate, elephant, ap_elephant, capacity)
    best, _ = brute_force_oracle(p)
    res = local_search(p, OptimizerConfig(iterations=20 * n, init_mode=InitMode.EMPTY),
                       rng=np.random.default_rng(k))
    ratios.append(1.0 if best == 0 else res.fitness / best)

ratios = np.array(ratios)
print(f"optimum hit in {np.mean(ratios > 1 - 1e-12):.0%} of instances")
print(f">= 95% of optimum in {np.mean(ratios >= 0.95):.0%}, worst ratio {ratios.min():.3f}")

# the fitness trace of one larger search
n, l = 40, 8
q = rng.uniform(0.01, 0.03, (n, l)) * (rng.random((n, l)) < 0.5)
p = Problem(q, rng.uniform(0.1, 0.5, n), np.zeros(n, bool), np.ones(l, bool),
            rng.uniform(1.0, 3.0, l))
res = local_search(p, OptimizerConfig(iterations=8, init_mode=InitMode.EMPTY),
                   rng=np.random.default_rng(0))
for it, fit, moved in res.trace:
    print(f"iteration {it}: best {fit:.4f}, {moved} terminals moved")
