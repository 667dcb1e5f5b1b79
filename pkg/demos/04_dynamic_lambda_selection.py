"""Choosing the return decay per block at refresh time.

Two selectors are shown on the same synthetic block. The median selector
computes twenty-one candidate return sequences (sharing one set of
bootstrap values) and keeps the per-step median, which is robust to outlier
candidates. The error-bounded selector instead searches for the largest
decay whose mean absolute TD error stays under a fixed bound, probing the
extremes first and bisecting between them.
"""

import numpy as np

from lambda_replay import (
    BlockView,
    error_bounded_lambda,
    median_dynamic_returns,
    recursive_lambda_sequence,
)

rng = np.random.default_rng(7)
length = 20
terminals = rng.random(length) < 0.1
q_bootstrap = rng.normal(size=(length + 1, 3))
if terminals[-1]:
    q_bootstrap[-1] = 0.0
block = BlockView(
    states=rng.normal(size=(length + 1, 3)),
    actions=rng.integers(0, 3, size=length),
    rewards=rng.normal(size=length),
    terminals=terminals,
    q_bootstrap=q_bootstrap,
)
gamma = 0.97

print("per-step median over candidates at decay 0/20 ... 20/20")
seq = median_dynamic_returns(block, k=20, gamma=gamma)
print("  chosen decay per step:", np.round(seq.chosen_lambda, 2))
print("  mean abs TD error:    ", np.round(np.mean(seq.abs_td_errors), 4))
print()

print("largest decay keeping the mean abs TD error under a bound")
for bound in (0.2, 0.5, 1.0, 5.0):
    lam_star, bounded = error_bounded_lambda(block, bound, max_depth=7, gamma=gamma)
    achieved = float(np.mean(bounded.abs_td_errors))
    print(f"  bound {bound:>4}: decay {lam_star:<10} mean error {achieved:.4f}")

print()
print("for reference, the error profile over fixed decay values:")
entry_q = block.q_bootstrap[np.arange(length), block.actions]
for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
    returns = recursive_lambda_sequence(block, gamma, lam)
    print(f"  decay {lam:>4}: mean error {np.mean(np.abs(returns - entry_q)):.4f}")
