"""Prioritizing minibatches by the true TD error, measured before sampling.

Because targets are refreshed before anything is drawn, every cache entry
carries its real current error. Entries above the error median get a boost
of p / S probability mass, entries below give it up, and the median itself
stays at 1 / S. The script shows the exact distribution on a small cache,
the effect on the mean sampled error, and the linear annealing of p.
"""

import numpy as np

from lambda_replay import anneal_p, priority_split, sample_minibatch
from lambda_replay.replay import Cache

errors = np.array([0.05, 0.40, 0.10, 0.90, 0.20])
cache = Cache(
    states=np.zeros((5, 1)),
    state_ids=None,
    actions=np.zeros(5, dtype=np.int64),
    lambda_returns=np.zeros(5),
    abs_td_errors=errors,
    block_lambdas=np.zeros(1),
)

split = priority_split(cache)
print("abs TD errors:", errors)
print(f"rank split: below={split.below.tolist()} at={split.at.tolist()} above={split.above.tolist()}")
print()

for p in (0.0, 0.2, 1.0):
    probs = cache.sampling_probabilities(p)
    print(f"p={p:>3}: probabilities {np.round(probs, 3)}  (sum {probs.sum():.1f})")

print()
rng = np.random.default_rng(0)
for p in (0.0, 0.2, 0.5):
    idx = sample_minibatch(cache, 200_000, p, rng)
    print(f"p={p:>3}: mean sampled |error| = {errors[idx].mean():.4f}")

print()
print("p anneals linearly to zero so the bias vanishes by the end of training:")
total = 200_000
for t in (0, 50_000, 100_000, 150_000, 200_000):
    print(f"  step {t:>7}: p = {anneal_p(t, total, 0.1):.3f}")
