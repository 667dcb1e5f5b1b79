"""Refresh cost scales with the cache, not with the replay memory.

Fills replay memories of very different capacities, rebuilds the same-sized
cache from each, and compares the exact Q-evaluation counts and wall time.
Per block of B transitions the builder scores B + 1 states for bootstraps
and B entry states for the stored TD errors, so a cache of S entries costs
(S / B)(B + 1) + S evaluations however big the memory behind it is.
"""

import time

import numpy as np

from lambda_replay import ReplayMemory, ReturnEstimatorConfig, TabularQ, build_cache

CACHE_SIZE = 8_000
BLOCK_SIZE = 100

estimator = ReturnEstimatorConfig(gamma=0.99, lam=0.8)
closed_form = (CACHE_SIZE // BLOCK_SIZE) * (BLOCK_SIZE + 1) + CACHE_SIZE
print(f"cache {CACHE_SIZE} in blocks of {BLOCK_SIZE}: closed form {closed_form} evaluations")
print()
print(f"{'capacity':>12} {'q_evals':>10} {'best_wall':>10}")

for capacity in (10_000, 100_000, 1_000_000):
    rng = np.random.default_rng(0)
    mem = ReplayMemory(capacity)
    chain = rng.normal(size=(capacity + 1, 4))
    ids = rng.integers(32, size=capacity + 1)
    mem.extend_batch(
        states=chain[:-1],
        actions=rng.integers(2, size=capacity),
        rewards=rng.normal(size=capacity),
        next_states=chain[1:],
        terminals=np.zeros(capacity, dtype=bool),
        ids=ids[:-1],
        next_ids=ids[1:],
    )
    q = TabularQ(32, 2)
    times = []
    for rep in range(5):
        before = q.eval_count
        start = time.perf_counter()
        build_cache(mem, q, estimator, CACHE_SIZE, BLOCK_SIZE, np.random.default_rng(rep))
        times.append(time.perf_counter() - start)
        used = q.eval_count - before
    print(f"{capacity:>12} {used:>10} {min(times) * 1e3:>8.1f}ms")
    assert used == closed_form

print()
print("identical counts at every capacity: the refresh never touches")
print("transitions that were not promoted into the cache")
